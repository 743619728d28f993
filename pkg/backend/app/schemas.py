"""Pydantic schemas for federation and experiment configuration."""

from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .data.preprocess import PreprocessOpts
from .optim import AdamWHyper


class FederationConfig(BaseModel):
    """Protocol hyperparameters for one federated run."""
    model_config = ConfigDict(extra="forbid")

    num_clients: int = Field(8, ge=1)
    clients_per_round: Optional[int] = Field(None, ge=1)  # None means every client
    rounds: int = Field(30, ge=1)
    local_epochs: int = Field(2, ge=1)
    batch_size: int = Field(32, ge=1)
    optimizer: AdamWHyper = Field(default_factory=AdamWHyper)
    proximal_mu: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    # weight clients by n_i / (number of participating devices) instead of n_i / sum(n_j)
    literal_device_weighting: bool = False

    @model_validator(mode="after")
    def fill_clients_per_round(self) -> "FederationConfig":
        if self.clients_per_round is None:
            self.clients_per_round = self.num_clients
        if self.clients_per_round > self.num_clients:
            raise ValueError(
                f"clients_per_round ({self.clients_per_round}) exceeds num_clients ({self.num_clients})"
            )
        return self


class SyntheticSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["synthetic"] = "synthetic"
    classes: int = Field(4, ge=1, lt=2 ** 16)
    per_class: int = Field(200, ge=1)
    test_per_class: int = Field(50, ge=1)
    channels: int = Field(1, ge=1, lt=2 ** 16)
    height: int = Field(16, ge=1, lt=2 ** 16)
    width: int = Field(16, ge=1, lt=2 ** 16)
    seed: int = Field(0, ge=0)


class FileSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["file"] = "file"
    train: Path
    test: Path


class PartitionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scheme: Literal["iid", "dirichlet", "shards"] = "iid"
    alpha: float = Field(0.5, gt=0)
    shards_per_client: int = Field(2, ge=1)


class ExperimentConfig(BaseModel):
    """A complete experiment: one JSON document, no positional hyperparameters."""
    model_config = ConfigDict(extra="forbid")

    dataset: Union[SyntheticSource, FileSource] = Field(default_factory=SyntheticSource, discriminator="kind")
    preprocess: PreprocessOpts = Field(default_factory=PreprocessOpts)
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    model: Literal["mlp", "small_cnn"] = "mlp"
    federation: FederationConfig = Field(default_factory=FederationConfig)
    output_dir: Path = Path("data/runs/latest")
    emit: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])
