# standard library imports
import logging

# third-party imports
import numpy as np

# local imports
from povsim.errors import ValidationError
from povsim.util import id_digest


__docformat__ = "google"


class AcquisitionMemory:
    """
    Memoryful record of the ids acquired from the label pool.

    Each round appends the newly labeled ids to those of the previous rounds; nothing is ever removed,
    so the acquired sets are nested along the budget schedule.
    """
    def __init__(self, pool_ids):
        """
        Args:
            pool_ids (array-like): ids of the label pool
        """
        self.pool = np.unique(np.asarray(pool_ids, dtype=np.int64))
        if len(self.pool) != len(pool_ids):
            raise ValidationError("label pool ids must be unique")
        self._taken = np.zeros(len(self.pool), dtype=bool)
        self.sizes = []
        logging.debug(f"AcquisitionMemory: pool of {len(self.pool)} ids")

    def __len__(self):
        return int(self._taken.sum())

    def append(self, ids):
        """
        Appends freshly acquired ids.

        Args:
            ids (array-like): ids of the label pool that have not been acquired yet
        """
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self.pool, ids)
        assert np.all(pos < len(self.pool)) and np.array_equal(self.pool[np.minimum(pos, len(self.pool) - 1)], ids), \
            "acquired ids must belong to the label pool"
        assert len(np.unique(ids)) == len(ids), "acquired ids must be distinct"
        assert not self._taken[pos].any(), "an id was acquired twice"
        previous = self.acquired
        self._taken[pos] = True
        self.sizes.append(len(self))
        assert np.all(np.isin(previous, self.acquired)), "acquired sets must be nested"

    @property
    def acquired(self) -> np.ndarray:
        """Acquired ids in canonical (ascending) order."""
        return self.pool[self._taken]

    @property
    def remaining(self) -> np.ndarray:
        return self.pool[~self._taken]

    def digest(self) -> str:
        return id_digest(self.acquired)
