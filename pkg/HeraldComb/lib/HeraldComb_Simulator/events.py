# HeraldComb: runs in a standard CPython 3.9+ environment.
"""Generated photon pairs: single events and the structure-of-arrays batch used by the chain."""

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from heraldcomb_errors import ConfigError


class PairEvent(NamedTuple):
    t_create: float
    delta_t: float
    resonant: bool
    pol_signal: str
    mode: int = 0


@dataclass(eq=False)
class PairBatch:
    """Many pairs as parallel arrays.

    ``signal_admit``/``idler_admit`` hold the probability with which each photon
    was already admitted by pre-thinning (1 when no pre-thinning was done); the
    filter stage divides its transmission by it.
    """

    t_create: np.ndarray
    delta_t: np.ndarray
    mode: np.ndarray
    signal_v: np.ndarray
    signal_alive: np.ndarray
    idler_alive: np.ndarray
    signal_admit: np.ndarray
    idler_admit: np.ndarray

    def __post_init__(self):
        self.t_create = np.asarray(self.t_create, dtype=float)
        self.delta_t = np.asarray(self.delta_t, dtype=float)
        self.mode = np.asarray(self.mode, dtype=np.int64)
        self.signal_v = np.asarray(self.signal_v, dtype=bool)
        self.signal_alive = np.asarray(self.signal_alive, dtype=bool)
        self.idler_alive = np.asarray(self.idler_alive, dtype=bool)
        self.signal_admit = np.asarray(self.signal_admit, dtype=float)
        self.idler_admit = np.asarray(self.idler_admit, dtype=float)
        n = self.t_create.shape
        for f in dataclasses.fields(self):
            if getattr(self, f.name).shape != n:
                raise ConfigError("PairBatch field {} has shape {}, expected {}".format(f.name, getattr(self, f.name).shape, n))

    def __len__(self):
        return int(self.t_create.size)

    @classmethod
    def from_arrays(cls, t_create, delta_t, mode=None, signal_v=None):
        """Batch with every photon alive and nothing pre-admitted."""
        n = np.asarray(t_create).size
        return cls(
            t_create, delta_t,
            np.zeros(n, np.int64) if mode is None else mode,
            np.zeros(n, bool) if signal_v is None else signal_v,
            np.ones(n, bool), np.ones(n, bool), np.ones(n), np.ones(n),
        )

    @classmethod
    def empty(cls):
        return cls.from_arrays(np.empty(0), np.empty(0))

    @classmethod
    def from_events(cls, events):
        events = list(events)
        return cls.from_arrays(
            [e.t_create for e in events], [e.delta_t for e in events],
            [e.mode for e in events], [e.pol_signal == "V" for e in events],
        )

    @classmethod
    def concatenate(cls, batches):
        batches = list(batches)
        if not batches:
            return cls.empty()
        return cls(**{f.name: np.concatenate([getattr(b, f.name) for b in batches]) for f in dataclasses.fields(cls)})

    @property
    def resonant(self):
        return self.mode == 0

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def select(self, mask):
        return PairBatch(**{f.name: getattr(self, f.name)[mask] for f in dataclasses.fields(self)})

    def survivors(self):
        """Pairs with at least one photon still alive."""
        return self.select(self.signal_alive | self.idler_alive)
