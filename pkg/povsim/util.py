# standard library imports
import hashlib
import json
import logging
import math
import signal
from typing import Sequence

# third-party imports
import numpy as np
import pandas as pd


def pandas_dict(*args, **kwargs) -> pd.Series:
    return pd.Series(dict(*args, **kwargs), dtype=object)


# === seeds and digests ================================================================================================

def derive_seed(*entropy: int) -> int:
    """Derives a 32-bit seed from a tuple of non-negative integers.

    The result only depends on the tuple, so that streams keyed by e.g. (experiment_seed, rep_index, round_index)
    are the same whatever the order in which repetitions are executed.
    """
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1)[0])


def make_rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def id_digest(ids: Sequence[int]) -> str:
    """Stable 64-bit digest of an id set.

    BLAKE2b with an 8-byte digest over the little-endian int64 bytes of the sorted ids, as 16 hex characters.
    """
    arr = np.sort(np.asarray(ids, dtype="<i8"))
    return hashlib.blake2b(arr.tobytes(), digest_size=8).hexdigest()


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# === files ============================================================================================================

def save_json(d, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(d, f, ensure_ascii=False, indent=2)


# === signal handling ==================================================================================================


class DelayInterrupt:
    """Catches SIGINT and SIGTERM and re-raises them after the context manager exits.

    Used around result writes so that an interrupt never leaves half-written tables, e.g. `with DelayInterrupt():`
    """
    signal_received = False
    signals = (signal.SIGINT, signal.SIGTERM)

    def __enter__(self):
        self.default_handlers = [signal.getsignal(s) for s in self.signals]
        [signal.signal(s, self.on_signal) for s in self.signals]

    def on_signal(self, *args):
        logging.info(f"povsim.util:DelayInterrupt -- Signal received!")
        self.signal_received = True

    def __exit__(self, *args):
        [signal.signal(s, d) for s, d in zip(self.signals, self.default_handlers)]
        if self.signal_received:
            raise KeyboardInterrupt()
