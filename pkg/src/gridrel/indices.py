"""Reliability indices from per-load-point interruption history."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

# Shed below this (MW) does not count as an interruption.
SHED_EPS = 1e-9


@dataclass
class LoadPointHistory:
    """Interruption bookkeeping for a fixed list of load points.

    An interruption is a maximal run of consecutive increments with positive
    shed at the point. ``record`` must be called for consecutive increments;
    ``gap`` marks increments that were skipped because nothing was shed.
    """

    points: tuple[str, ...]
    count: np.ndarray = None
    hours: np.ndarray = None
    energy: np.ndarray = None
    _prev: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.points)
        if self.count is None:
            self.count = np.zeros(n, dtype=np.int64)
        if self.hours is None:
            self.hours = np.zeros(n)
        if self.energy is None:
            self.energy = np.zeros(n)
        if self._prev is None:
            self._prev = np.zeros(n, dtype=bool)

    def record(self, shed, dt: float):
        shed = np.asarray(shed, dtype=float)
        hit = shed > SHED_EPS
        self.count += hit & ~self._prev
        self.hours += hit * dt
        self.energy += np.where(hit, shed, 0.0) * dt
        self._prev = hit

    def gap(self):
        self._prev[:] = False

    def subset(self, idx) -> "LoadPointHistory":
        idx = np.asarray(idx, dtype=int)
        return LoadPointHistory(tuple(self.points[i] for i in idx), self.count[idx].copy(),
                                self.hours[idx].copy(), self.energy[idx].copy())


@dataclass(frozen=True)
class IndexReport:
    lambda_s: float = 0.0
    U_s: float = 0.0
    r_s: float = 0.0
    ENS: float = 0.0
    CENS: float = 0.0
    SAIFI: float = 0.0
    SAIDI: float = 0.0
    CAIDI: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def compute_indices(history: LoadPointHistory, customers, costs=None) -> IndexReport:
    """System indices for the points in ``history``.

    ``customers`` and ``costs`` (per MWh) map point id to value, or are
    arrays aligned with ``history.points``.
    """
    n = len(history.points)
    N = _aligned(customers, history.points, "customers")
    c = np.zeros(n) if costs is None else _aligned(costs, history.points, "costs")
    lam = history.count.astype(float)
    U = history.hours
    ens_i = history.energy
    lam_s = float(lam.sum())
    U_s = float(U.sum())
    total_n = float(N.sum())
    saifi = float(lam @ N) / total_n if total_n > 0 else 0.0
    saidi = float(U @ N) / total_n if total_n > 0 else 0.0
    return IndexReport(
        lambda_s=lam_s,
        U_s=U_s,
        r_s=U_s / lam_s if lam_s > 0 else 0.0,
        ENS=float(ens_i.sum()),
        CENS=float(ens_i @ c),
        SAIFI=saifi,
        SAIDI=saidi,
        CAIDI=saidi / saifi if saifi > 0 else 0.0,
    )


def average_load_ens(history: LoadPointHistory, loads) -> float:
    """ENS as sum of U_i times the average load P_i; agrees with the recorded
    energy when loads are flat during interruptions."""
    P = _aligned(loads, history.points, "loads")
    return float(history.hours @ P)


def _aligned(values, points, name) -> np.ndarray:
    if isinstance(values, dict):
        missing = [p for p in points if p not in values]
        if missing:
            raise ValueError(f"{name} missing for load points {missing}")
        extra = set(values) - set(points)
        if extra:
            raise ValueError(f"{name} given for unknown load points {sorted(extra)}")
        return np.array([float(values[p]) for p in points])
    arr = np.asarray(values, dtype=float)
    if arr.shape != (len(points),):
        raise ValueError(f"{name} has shape {arr.shape}, expected ({len(points)},)")
    return arr
