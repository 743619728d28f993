"""
FedAvg round protocol: sample clients, broadcast, local AdamW training,
sample-weighted aggregation and global evaluation.
"""
import concurrent.futures
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..data.dataset import Dataset
from ..data.partition import PartitionPlan
from ..data.preprocess import PreprocessOpts, preprocess, preprocess_split
from ..errors import ConfigError, LayoutError, ProtocolError
from ..models import ClientState, EvalResult, FederationResult, LocalStats, RoundRecord
from ..nets.model import ModelParams, ModelSpec, backward, forward, init_params, require_layout
from ..optim import AdamWState, Batch, adamw_step, cross_entropy
from ..schemas import FederationConfig
from . import seeding

logger = logging.getLogger(__name__)

EVAL_CHUNK = 256


@dataclass(frozen=True, eq=False)
class TrainingTask:
    """What every client trains on: the model spec, the shared training split and its pipeline."""
    spec: ModelSpec
    train: Dataset
    preprocess: PreprocessOpts


def sample_clients(n_clients: int, k: int, rng: np.random.Generator) -> List[int]:
    """K distinct client ids, uniformly without replacement, returned in ascending order."""
    if not 1 <= k <= n_clients:
        raise ConfigError(f"cannot sample {k} of {n_clients} clients")
    if k == n_clients:
        return list(range(n_clients))
    return sorted(int(c) for c in rng.choice(n_clients, size=k, replace=False))


def make_clients(plan: PartitionPlan) -> List[ClientState]:
    return [ClientState(client_id=i, indices=idx) for i, idx in enumerate(plan.client_indices)]


def local_train(
    client: ClientState,
    global_params: ModelParams,
    config: FederationConfig,
    rng: np.random.Generator,
    task: TrainingTask,
) -> Tuple[ModelParams, LocalStats]:
    """
    E epochs of mini-batch AdamW on the client's shard from a copy of the
    global model. The shard is reshuffled every epoch and the last short
    batch is kept. With proximal_mu > 0 each gradient gets mu·(θ − w_global).
    """
    if client.n_samples < 1:
        raise ProtocolError(f"client {client.client_id} has no examples", client.client_id)
    train, opts = task.train, task.preprocess
    params = global_params
    state = AdamWState.fresh(len(params))
    anchor = global_params.values
    b = config.batch_size
    steps = 0
    epoch_loss = epoch_acc = 0.0

    for _ in range(config.local_epochs):
        order = client.indices[rng.permutation(client.n_samples)]
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), b):
            idx = order[start:start + b]
            inputs = np.stack([preprocess(train.images[i], opts, rng, train.mean, train.std) for i in idx])
            batch = Batch(inputs=inputs, labels=train.labels[idx])

            logits, cache = forward(task.spec, params, batch.inputs)
            loss, grad_logits = cross_entropy(logits, batch.labels)
            grad = backward(task.spec, params, cache, grad_logits)
            if config.proximal_mu > 0:
                grad = grad + config.proximal_mu * (params.values - anchor)
            params, state = adamw_step(params, grad, state, config.optimizer)

            steps += 1
            loss_sum += loss * len(batch)
            correct += int((logits.argmax(axis=1) == batch.labels).sum())
        epoch_loss = loss_sum / client.n_samples
        epoch_acc = correct / client.n_samples

    return params, LocalStats(loss=epoch_loss, accuracy=epoch_acc, steps=steps)


def _weights(sizes: Sequence[int], device_count: Optional[int]) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.float64)
    if (sizes < 1).any():
        raise ProtocolError("every participating client needs n_i >= 1")
    denominator = float(device_count) if device_count is not None else sizes.sum()
    return sizes / denominator


def aggregate(
    updates: Sequence[Tuple[int, ModelParams]],
    device_count: Optional[int] = None,
) -> ModelParams:
    """
    w = Σ n_i·w_i / Σ n_i, summed in the given order.

    ``device_count`` switches to the literal n_i / N weighting, whose weights
    only sum to one when the mean shard size is one.
    """
    if not updates:
        raise ProtocolError("aggregate needs at least one client update")
    layout = updates[0][1].layout
    for _, w in updates[1:]:
        if w.layout != layout:
            raise LayoutError("client updates have different parameter layouts")
    weights = _weights([n for n, _ in updates], device_count)
    total = weights[0] * updates[0][1].values
    for weight, (_, w) in zip(weights[1:], updates[1:]):
        total = total + weight * w.values
    return ModelParams(values=total, layout=layout)


def global_loss(per_client: Sequence[Tuple[int, float]], device_count: Optional[int] = None) -> float:
    """Sample-weighted mean of local losses."""
    if not per_client:
        raise ProtocolError("global_loss needs at least one client")
    weights = _weights([n for n, _ in per_client], device_count)
    return float(sum(w * loss for w, (_, loss) in zip(weights, per_client)))


def evaluate_inputs(
    spec: ModelSpec,
    params: ModelParams,
    inputs: np.ndarray,
    labels: np.ndarray,
) -> EvalResult:
    """Argmax accuracy (ties to the lowest class id) and mean cross-entropy on prepared inputs."""
    if len(labels) == 0:
        raise ProtocolError("evaluation split is empty")
    require_layout(params, spec)
    labels = np.asarray(labels, dtype=np.int64)
    loss_sum = 0.0
    predictions = np.empty(len(labels), dtype=np.int64)
    for start in range(0, len(labels), EVAL_CHUNK):
        stop = min(start + EVAL_CHUNK, len(labels))
        logits, _ = forward(spec, params, inputs[start:stop])
        loss, _ = cross_entropy(logits, labels[start:stop])
        loss_sum += loss * (stop - start)
        predictions[start:stop] = logits.argmax(axis=1)

    hits = predictions == labels
    per_class = []
    for cls in range(spec.num_classes):
        mask = labels == cls
        per_class.append(float(hits[mask].mean()) if mask.any() else float("nan"))
    return EvalResult(
        accuracy=float(hits.mean()),
        loss=loss_sum / len(labels),
        per_class_accuracy=tuple(per_class),
    )


def prepare_eval_inputs(
    test: Dataset,
    opts: PreprocessOpts,
    stats_from: Dataset,
    seed: int = 0,
) -> np.ndarray:
    """Preprocess a split once for evaluation, normalizing with ``stats_from``'s statistics."""
    rng = seeding.derive_rng(seed, seeding.EVAL) if opts.eval_crop == "random" else None
    return preprocess_split(test.images, opts, stats_from.mean, stats_from.std, rng)


def evaluate(
    spec: ModelSpec,
    params: ModelParams,
    test: Dataset,
    opts: PreprocessOpts,
    stats_from: Dataset,
    seed: int = 0,
) -> EvalResult:
    """Accuracy, mean loss and per-class accuracy on ``test``, standardized with ``stats_from``'s statistics."""
    if len(test) == 0:
        raise ProtocolError("evaluation split is empty")
    inputs = prepare_eval_inputs(test, opts, stats_from, seed)
    return evaluate_inputs(spec, params, inputs, test.labels)


def _train_sampled(
    sampled: Sequence[int],
    clients: Sequence[ClientState],
    global_params: ModelParams,
    config: FederationConfig,
    task: TrainingTask,
    round_index: int,
    threads: int,
) -> Dict[int, Tuple[ModelParams, LocalStats]]:
    def run(cid: int) -> Tuple[ModelParams, LocalStats]:
        rng = seeding.derive_rng(config.seed, seeding.TRAIN, round_index, cid)
        return local_train(clients[cid], global_params, config, rng, task)

    results: Dict[int, Tuple[ModelParams, LocalStats]] = {}
    if threads <= 0:
        for cid in sampled:
            try:
                results[cid] = run(cid)
            except Exception as exc:
                raise ProtocolError(f"round {round_index}: client {cid} failed: {exc}", cid) from exc
        return results

    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
        future_to_client = {executor.submit(run, cid): cid for cid in sampled}
        for future in concurrent.futures.as_completed(future_to_client):
            cid = future_to_client[future]
            try:
                results[cid] = future.result()
            except Exception as exc:
                for pending in future_to_client:
                    pending.cancel()
                raise ProtocolError(f"round {round_index}: client {cid} failed: {exc}", cid) from exc
    return results


def run_federation(
    config: FederationConfig,
    task: TrainingTask,
    test: Dataset,
    plan: PartitionPlan,
    threads: int = 0,
    initial_params: Optional[ModelParams] = None,
) -> FederationResult:
    """
    T rounds of sample → broadcast → local_train → aggregate → evaluate.

    Output is a pure function of the inputs: client results are aggregated in
    ascending client id whatever order the threads finish in.
    """
    if plan.num_clients != config.num_clients:
        raise ConfigError(f"partition has {plan.num_clients} clients, config expects {config.num_clients}")
    plan.validate(len(task.train))
    clients = make_clients(plan)
    params = initial_params
    if params is None:
        params = init_params(task.spec, seeding.derive_seed(config.seed, seeding.INIT))
    require_layout(params, task.spec)
    test_inputs = prepare_eval_inputs(test, task.preprocess, task.train, config.seed)
    device_count = config.clients_per_round if config.literal_device_weighting else None

    records: List[RoundRecord] = []
    for t in range(1, config.rounds + 1):
        sampled = sample_clients(config.num_clients, config.clients_per_round,
                                 seeding.derive_rng(config.seed, seeding.SAMPLE, t))
        results = _train_sampled(sampled, clients, params, config, task, t, threads)

        stats = []
        for cid in sampled:
            clients[cid].history[t] = results[cid][1]
            stats.append(results[cid][1])
            logger.debug("round %d client %d: n=%d loss=%.4f acc=%.4f",
                         t, cid, clients[cid].n_samples, results[cid][1].loss, results[cid][1].accuracy)

        params = aggregate([(clients[cid].n_samples, results[cid][0]) for cid in sampled], device_count)
        if not np.isfinite(params.values).all():
            raise ProtocolError(f"round {t}: aggregated parameters are not finite")
        result = evaluate_inputs(task.spec, params, test_inputs, test.labels)
        record = RoundRecord(
            round=t,
            sampled_clients=tuple(sampled),
            client_samples=tuple(clients[cid].n_samples for cid in sampled),
            client_train_loss=tuple(s.loss for s in stats),
            client_train_acc=tuple(s.accuracy for s in stats),
            global_train_loss=global_loss([(clients[cid].n_samples, s.loss) for cid, s in zip(sampled, stats)],
                                          device_count),
            global_test_loss=result.loss,
            global_test_acc=result.accuracy,
        )
        records.append(record)
        logger.info("round %d/%d: clients=%s test_loss=%.4f test_acc=%.4f",
                    t, config.rounds, list(sampled), record.global_test_loss, record.global_test_acc)
        if not math.isfinite(record.global_test_loss):
            raise ProtocolError(f"round {t}: global test loss is not finite")

    return FederationResult(records=records, params=params, clients=clients)
