"""AdamW with decoupled weight decay, and cross-entropy losses."""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import LabelError, NumericError, ShapeError
from .kernels.tensor import as_tensor, log_softmax
from .nets.model import ModelParams

ROW_SUM_TOLERANCE = 1e-9


class AdamWHyper(BaseModel):
    """Step size, decoupled decay and moment constants for AdamW."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(1e-3, gt=0)
    weight_decay: float = Field(1e-2, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)


@dataclass(frozen=True, eq=False)
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, size: int) -> "AdamWState":
        return cls(m=np.zeros(size, dtype=np.float64), v=np.zeros(size, dtype=np.float64), t=0)


@dataclass(frozen=True, eq=False)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 1:
            raise ShapeError("a batch needs at least one example")
        if len(self.inputs) != len(labels):
            raise ShapeError(f"batch has {len(self.inputs)} inputs but {len(labels)} labels")
        if (labels < 0).any():
            raise LabelError("batch contains negative labels")

    def __len__(self) -> int:
        return len(self.labels)


def adamw_step(
    params: ModelParams,
    grad: np.ndarray,
    state: AdamWState,
    hyper: AdamWHyper,
    lr: Optional[float] = None,
) -> Tuple[ModelParams, AdamWState]:
    """
    One AdamW update. ``lr`` overrides ``hyper.lr`` for this step only.

        m ← β1·m + (1−β1)·g          v ← β2·v + (1−β2)·g²
        m̂ = m/(1−β1ᵗ)                v̂ = v/(1−β2ᵗ)
        θ ← θ − η·(m̂/(√v̂+ε) + λ·θ)
    """
    grad = np.asarray(grad, dtype=np.float64)
    theta = params.values
    if grad.shape != theta.shape or state.m.shape != theta.shape or state.v.shape != theta.shape:
        raise ShapeError(
            f"adamw shapes differ: params {theta.shape}, grad {grad.shape}, state {state.m.shape}/{state.v.shape}"
        )
    if not np.isfinite(grad).all():
        raise NumericError("non-finite gradient passed to adamw_step")
    eta = hyper.lr if lr is None else lr
    if not eta > 0:
        raise NumericError(f"learning rate must be > 0, got {eta}")

    b1, b2 = hyper.beta1, hyper.beta2
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * (grad * grad)
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    update = m_hat / (np.sqrt(v_hat) + hyper.eps) + hyper.weight_decay * theta
    return params.replace(theta - eta * update), AdamWState(m=m, v=v, t=t)


def _check_labels(labels: np.ndarray, batch: int, n: int) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    if len(labels) != batch:
        raise ShapeError(f"{len(labels)} labels for a batch of {batch} logits rows")
    if labels.size and ((labels < 0).any() or (labels >= n).any()):
        bad = labels[(labels < 0) | (labels >= n)][0]
        raise LabelError(f"label {bad} outside [0, {n})")
    return labels.astype(np.int64)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean negative log-likelihood over the batch and its gradient (softmax − onehot)/b."""
    logits = as_tensor(logits)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ShapeError(f"cross_entropy expects b×n logits with b >= 1, got {logits.shape}")
    b, n = logits.shape
    labels = _check_labels(labels, b, n)

    logp = log_softmax(logits)
    rows = np.arange(b)
    loss = -logp[rows, labels].sum() / b
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    grad /= b
    return max(float(loss), 0.0), grad


def cross_entropy_from_distributions(Y: np.ndarray, P: np.ndarray) -> float:
    """H(Y, P) = −Σ Y·log P, averaged over rows; 0·log 0 counts as 0."""
    Y = as_tensor(Y)
    P = as_tensor(P)
    if Y.shape != P.shape or Y.ndim != 2 or Y.shape[0] < 1:
        raise ShapeError(f"distribution shapes must be equal b×n, got {Y.shape} and {P.shape}")
    for name, dist in (("Y", Y), ("P", P)):
        if (dist < 0).any() or not np.allclose(dist.sum(axis=1), 1.0, rtol=0.0, atol=ROW_SUM_TOLERANCE):
            raise NumericError(f"rows of {name} must be probability distributions")
    support = Y > 0
    if (P[support] <= 0).any():
        raise NumericError("P assigns zero probability where Y is positive")
    total = -(Y[support] * np.log(P[support])).sum()
    return float(total / Y.shape[0])
