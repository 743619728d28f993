"""
Per-entity RNG streams derived from (master seed, purpose, round, client).

Each stream is independent of scheduling: a client's stream depends only on
its coordinates, never on which thread or in what order it runs.
"""
import numpy as np

INIT = 1
SAMPLE = 2
TRAIN = 3
PARTITION = 4
EVAL = 5


def derive_seed(master_seed: int, purpose: int, round_index: int = 0, client_id: int = 0) -> int:
    seq = np.random.SeedSequence([int(master_seed), purpose, int(round_index), int(client_id)])
    return int(seq.generate_state(1, np.uint64)[0])


def derive_rng(master_seed: int, purpose: int, round_index: int = 0, client_id: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, purpose, round_index, client_id))
