from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .nets.model import ModelParams


@dataclass(frozen=True)
class LocalStats:
    loss: float      # mean loss over the final local epoch
    accuracy: float  # training accuracy over the final local epoch
    steps: int


@dataclass
class ClientState:
    client_id: int
    indices: np.ndarray
    # round -> stats for the rounds this client was sampled in
    history: Dict[int, LocalStats] = field(default_factory=dict)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if len(self.indices) < 1:
            raise ValueError(f"client {self.client_id} owns no examples")

    @property
    def n_samples(self) -> int:
        return len(self.indices)

    @property
    def last_stats(self) -> Optional[LocalStats]:
        if not self.history:
            return None
        return self.history[max(self.history)]


@dataclass(frozen=True)
class RoundRecord:
    round: int
    sampled_clients: Tuple[int, ...]
    client_samples: Tuple[int, ...]
    client_train_loss: Tuple[float, ...]
    client_train_acc: Tuple[float, ...]
    global_train_loss: float
    global_test_loss: float
    global_test_acc: float

    def as_dict(self) -> Dict:
        return {
            "round": self.round,
            "global_test_loss": self.global_test_loss,
            "global_test_acc": self.global_test_acc,
            "sampled_clients": list(self.sampled_clients),
            "client_samples": list(self.client_samples),
            "client_train_loss": list(self.client_train_loss),
            "client_train_acc": list(self.client_train_acc),
            "global_train_loss": self.global_train_loss,
        }


@dataclass(frozen=True, eq=False)
class EvalResult:
    accuracy: float
    loss: float
    per_class_accuracy: Tuple[float, ...]


@dataclass
class FederationResult:
    records: List[RoundRecord]
    params: ModelParams
    clients: List[ClientState]
