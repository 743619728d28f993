"""
Client partitioners over the training split: IID, Dirichlet label skew and label-sorted shards.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import PartitionError
from .dataset import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    client_indices: Tuple[np.ndarray, ...]
    scheme: str
    seed: int

    @property
    def num_clients(self) -> int:
        return len(self.client_indices)

    def sizes(self) -> List[int]:
        return [len(idx) for idx in self.client_indices]

    def validate(self, dataset_size: int) -> None:
        """Disjoint, covering, every client non-empty."""
        if any(len(idx) == 0 for idx in self.client_indices):
            raise PartitionError(f"{self.scheme}: some client received no examples")
        merged = np.concatenate(self.client_indices) if self.client_indices else np.array([], dtype=np.int64)
        if len(merged) != dataset_size or not np.array_equal(np.sort(merged), np.arange(dataset_size)):
            raise PartitionError(f"{self.scheme}: client index lists are not a disjoint cover of {dataset_size} examples")

    def label_histograms(self, labels: np.ndarray, num_classes: int) -> np.ndarray:
        return np.stack([np.bincount(labels[idx], minlength=num_classes) for idx in self.client_indices])


def _check_clients(n_clients: int, size: int) -> None:
    if n_clients < 1:
        raise PartitionError(f"need at least one client, got {n_clients}")
    if n_clients > size:
        raise PartitionError(f"{n_clients} clients but only {size} training examples")


def _plan(parts: Sequence[np.ndarray], scheme: str, seed: int, size: int) -> PartitionPlan:
    plan = PartitionPlan(
        client_indices=tuple(np.sort(np.asarray(p, dtype=np.int64)) for p in parts),
        scheme=scheme,
        seed=seed,
    )
    plan.validate(size)
    logger.debug("%s partition sizes: %s", scheme, plan.sizes())
    return plan


def partition_iid(dataset: Dataset, n_clients: int, seed: int) -> PartitionPlan:
    size = len(dataset)
    _check_clients(n_clients, size)
    rng = np.random.default_rng(seed)
    return _plan(np.array_split(rng.permutation(size), n_clients), "iid", seed, size)


def largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``; leftover units go to the largest fractional parts (lowest index on ties)."""
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    leftover = total - int(counts.sum())
    if leftover > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:leftover]] += 1
    return counts


def _dirichlet(rng: np.random.Generator, alpha: float, n_clients: int) -> np.ndarray:
    p = rng.dirichlet(np.full(n_clients, alpha))
    if not np.isfinite(p).all() or p.sum() <= 0:
        # very small alpha can underflow every gamma draw
        p = np.zeros(n_clients)
        p[rng.integers(n_clients)] = 1.0
    return p / p.sum()


def partition_dirichlet(dataset: Dataset, n_clients: int, alpha: float, seed: int) -> PartitionPlan:
    size = len(dataset)
    _check_clients(n_clients, size)
    if not alpha > 0:
        raise PartitionError(f"dirichlet alpha must be > 0, got {alpha}")
    rng = np.random.default_rng(seed)
    parts: List[List[int]] = [[] for _ in range(n_clients)]
    for cls in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == cls)
        if len(idx) == 0:
            continue
        idx = idx[rng.permutation(len(idx))]
        counts = largest_remainder(_dirichlet(rng, alpha, n_clients), len(idx))
        for client, chunk in enumerate(np.split(idx, np.cumsum(counts)[:-1])):
            parts[client].extend(chunk.tolist())

    # every client needs an example: take one from the current largest client
    for client in range(n_clients):
        if not parts[client]:
            donor = max(range(n_clients), key=lambda c: (len(parts[c]), -c))
            parts[client].append(parts[donor].pop())
    return _plan(parts, f"dirichlet({alpha:g})", seed, size)


def partition_shards(dataset: Dataset, n_clients: int, shards_per_client: int, seed: int) -> PartitionPlan:
    size = len(dataset)
    _check_clients(n_clients, size)
    if shards_per_client < 1:
        raise PartitionError(f"shards_per_client must be >= 1, got {shards_per_client}")
    total_shards = n_clients * shards_per_client
    if size % total_shards:
        raise PartitionError(f"{size} examples cannot be cut into {total_shards} equal shards")
    rng = np.random.default_rng(seed)
    shards = np.argsort(dataset.labels, kind="stable").reshape(total_shards, -1)
    order = rng.permutation(total_shards)
    parts = [
        shards[order[c * shards_per_client:(c + 1) * shards_per_client]].reshape(-1)
        for c in range(n_clients)
    ]
    return _plan(parts, f"shards({shards_per_client})", seed, size)
