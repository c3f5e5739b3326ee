"""Randomness: repair-time distributions, failure sampling, batteries, profiles.

Everything stochastic in a simulation is drawn through this module so that a
single master seed reproduces a run exactly, independent of how iterations
are distributed over worker processes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, signal, special

HOURS_PER_YEAR = 8760.0


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class GammaSpec:
    """Gamma repair-time distribution, shape ``k`` and scale ``theta`` in hours."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"gamma shape and scale must be positive, got {self.shape}, {self.scale}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    def cdf(self, hours):
        return special.gammainc(self.shape, np.asarray(hours, dtype=float) / self.scale)

    def ppf(self, u):
        return special.gammaincinv(self.shape, u) * self.scale

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, self.scale, size=size)

    def to_dict(self) -> dict:
        return {"shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class FixedDuration:
    """Deterministic repair time; used for analytic cross-checks."""

    hours: float

    @property
    def mean(self) -> float:
        return self.hours

    def cdf(self, hours):
        return (np.asarray(hours, dtype=float) >= self.hours).astype(float)

    def ppf(self, u):
        return self.hours if np.ndim(u) == 0 else np.full(np.shape(u), self.hours)

    def sample(self, rng: np.random.Generator, size=None):
        return self.hours if size is None else np.full(size, self.hours)

    def to_dict(self) -> dict:
        return {"fixed_hours": self.hours}


def repair_dist_from_dict(d: dict) -> GammaSpec | FixedDuration:
    if "fixed_hours" in d:
        return FixedDuration(float(d["fixed_hours"]))
    return GammaSpec(float(d["shape"]), float(d["scale"]))


def calibrate_gamma(shape: float, quantile_hours: float, quantile_prob: float) -> GammaSpec:
    """Gamma distribution with the given shape whose CDF at ``quantile_hours``
    equals ``quantile_prob``.

    The scale is found by bracketing root search on the regularized lower
    incomplete gamma function in the dimensionless variable ``h / theta``.
    """
    if not shape > 0:
        raise CalibrationError(f"shape must be positive, got {shape}")
    if not quantile_hours > 0:
        raise CalibrationError(f"quantile_hours must be positive, got {quantile_hours}")
    if not 0 < quantile_prob < 1:
        raise CalibrationError(f"quantile_prob must lie in (0, 1), got {quantile_prob}")

    def f(log_u):
        return special.gammainc(shape, math.exp(log_u)) - quantile_prob

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if f(lo) < 0:
            break
        lo -= 2.0
    for _ in range(200):
        if f(hi) > 0:
            break
        hi += 2.0
    if not (f(lo) < 0 < f(hi)):
        raise CalibrationError(f"could not bracket the gamma quantile for shape={shape}, p={quantile_prob}")
    log_u = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    spec = GammaSpec(shape, quantile_hours / math.exp(log_u))
    if abs(float(spec.cdf(quantile_hours)) - quantile_prob) > 1e-9:
        raise CalibrationError("gamma calibration did not reach 1e-9 accuracy")
    return spec


# --------------------------------------------------------------------------
# Failures


def failure_probability(rate_per_year: float, dt: float) -> float:
    """Probability that a component with the given annual rate fails within ``dt`` hours."""
    return -math.expm1(-rate_per_year / HOURS_PER_YEAR * dt)


@dataclass
class ComponentState:
    """Dynamic state of failable components and storage for one iteration.

    Line arrays are indexed by the line's position in ``RadialNetwork.lines``.
    ``remaining_sectioning`` is the time left until a faulted line is
    located and disconnected; the protecting breaker stays open meanwhile.
    """

    failed: np.ndarray
    remaining_repair: np.ndarray
    remaining_sectioning: np.ndarray
    battery_soc: dict[str, float] = field(default_factory=dict)

    @classmethod
    def healthy(cls, net) -> "ComponentState":
        n = len(net.lines)
        socs = {b.id: b.spec.capacity for b in net.batteries}
        return cls(np.zeros(n, bool), np.zeros(n), np.zeros(n), socs)

    def breaker_sectioning(self, net) -> dict[str, float]:
        """Remaining sectioning time per circuit breaker (max over the faults it clears)."""
        out = {sw.id: 0.0 for sw in net.breakers}
        for i in np.flatnonzero(self.failed):
            brk = net.protecting_breaker[net.lines[i].id]
            if brk is not None:
                out[brk] = max(out[brk], float(self.remaining_sectioning[i]))
        return out


def draw_failures(net, state: ComponentState, rng: np.random.Generator, dt: float) -> set[str]:
    """Per-step Bernoulli failure draw for every healthy line.

    Each healthy line fails with probability ``1 - exp(-lambda * dt)``, where
    lambda is its per-km rate times its length. Newly failed lines receive a
    repair time from their distribution and the sectioning time of the
    breaker that clears them.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = rng.random(len(net.lines))
    new = set()
    for i, line in enumerate(net.lines):
        if state.failed[i]:
            continue
        if u[i] < failure_probability(line.failure_rate, dt):
            new.add(line.id)
            state.failed[i] = True
            state.remaining_repair[i] = float(line.repair_time_dist.sample(rng))
            state.remaining_sectioning[i] = net.sectioning_time_for(line.id)
    return new


def geometric_gap(u: float, p: float) -> float:
    """Number of Bernoulli(p) trials up to and including the first success,
    by inversion of uniform ``u``. Returns ``inf`` when ``p == 0``.

    Monotone in ``p`` for fixed ``u``, which keeps draws common across
    parameter variations.
    """
    if p <= 0.0:
        return math.inf
    if p >= 1.0:
        return 1.0
    u = max(u, 1e-300)
    return max(1.0, math.ceil(math.log(u) / math.log1p(-p)))


class IterationStreams:
    """Independent random streams for one Monte Carlo iteration.

    Streams are derived from ``(master_seed, iteration)`` only, so results do
    not depend on worker count or execution order. Failure and repair
    uniforms are tabulated per line (row = line position), so every scenario
    sharing the network line order sees the same draws: the j-th failure of
    line i always uses column j.
    """

    TABLE = 32

    def __init__(self, master_seed: int, iteration: int, n_lines: int):
        self.master_seed = int(master_seed)
        self.iteration = int(iteration)
        root = np.random.SeedSequence(self.master_seed, spawn_key=(self.iteration,))
        fail_ss, repair_ss, soc_ss = root.spawn(3)
        self._fail = np.random.Generator(np.random.PCG64(fail_ss)).random((n_lines, self.TABLE))
        self._repair = np.random.Generator(np.random.PCG64(repair_ss)).random((n_lines, self.TABLE))
        self.soc = np.random.Generator(np.random.PCG64(soc_ss))

    def _extended(self, kind: int, line: int, j: int) -> float:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.iteration, 1000 + kind, line))
        return float(np.random.Generator(np.random.PCG64(ss)).random(j + 1)[j])

    def failure_uniform(self, line: int, j: int) -> float:
        if j < self.TABLE:
            return float(self._fail[line, j])
        return self._extended(0, line, j - self.TABLE)

    def repair_uniform(self, line: int, j: int) -> float:
        if j < self.TABLE:
            return float(self._repair[line, j])
        return self._extended(1, line, j - self.TABLE)


# --------------------------------------------------------------------------
# Battery


@dataclass(frozen=True)
class BatterySpec:
    capacity: float = 1.0
    inverter_limit: float = 0.5
    efficiency: float = 0.95
    min_soc: float = 0.1
    initial_soc_policy: str = "uniform_random"

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError("battery capacity must be positive")
        if not self.inverter_limit > 0:
            raise ValueError("inverter_limit must be positive")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if not 0 < self.min_soc < 1:
            raise ValueError("min_soc must lie in (0, 1)")
        if self.initial_soc_policy not in ("uniform_random", "full"):
            raise ValueError(f"unknown initial_soc_policy {self.initial_soc_policy!r}")

    @property
    def min_energy(self) -> float:
        return self.min_soc * self.capacity

    def initial_soc(self, rng: np.random.Generator) -> float:
        if self.initial_soc_policy == "full":
            return self.capacity
        return float(rng.uniform(self.min_energy, self.capacity))


@dataclass
class BatteryState:
    soc: float


def max_discharge(spec: BatterySpec, soc: float, dt: float, reserve_floor: float) -> float:
    """Largest deliverable discharge power (MW) without going below ``reserve_floor``."""
    return max(0.0, min(spec.inverter_limit, spec.efficiency * (soc - reserve_floor) / dt))


def max_charge(spec: BatterySpec, soc: float, dt: float) -> float:
    """Largest charging power (MW drawn from the grid) without exceeding capacity."""
    return max(0.0, min(spec.inverter_limit, (spec.capacity - soc) / (spec.efficiency * dt)))


def battery_dispatch(spec: BatterySpec, state: BatteryState, requested: float, dt: float,
                     reserve_floor: float | None = None) -> float:
    """Apply a signed power request (positive = discharge) for ``dt`` hours.

    The efficiency applies on both directions: discharging ``P`` removes
    ``P*dt/eta`` from storage, charging ``P`` adds ``P*dt*eta``. The request
    saturates at the inverter limit and the SoC bounds; the delivered power
    is returned and ``state.soc`` is updated.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    floor = spec.min_energy if reserve_floor is None else max(reserve_floor, spec.min_energy)
    if requested > 0:
        delivered = min(requested, max_discharge(spec, state.soc, dt, floor))
        state.soc = max(state.soc - delivered * dt / spec.efficiency, min(floor, state.soc))
        return delivered
    if requested < 0:
        taken = min(-requested, max_charge(spec, state.soc, dt))
        state.soc = min(spec.capacity, state.soc + taken * dt * spec.efficiency)
        return -taken
    return 0.0


# --------------------------------------------------------------------------
# Profiles

# 24-hour relative demand shapes, hour 0 = midnight.
DIURNAL = {
    "household": [0.45, 0.40, 0.38, 0.37, 0.38, 0.45, 0.65, 0.85, 0.80, 0.68, 0.62, 0.60,
                  0.60, 0.58, 0.58, 0.62, 0.75, 0.92, 1.00, 0.97, 0.90, 0.80, 0.66, 0.52],
    "farm": [0.50, 0.48, 0.47, 0.48, 0.55, 0.75, 0.90, 0.95, 0.85, 0.78, 0.75, 0.74,
             0.74, 0.72, 0.72, 0.76, 0.88, 1.00, 0.95, 0.85, 0.75, 0.66, 0.58, 0.53],
    "industry": [0.62, 0.60, 0.60, 0.60, 0.62, 0.70, 0.88, 0.98, 1.00, 1.00, 1.00, 0.98,
                 0.96, 0.98, 1.00, 0.98, 0.94, 0.85, 0.76, 0.70, 0.67, 0.65, 0.64, 0.63],
    "trade": [0.30, 0.28, 0.28, 0.28, 0.30, 0.35, 0.45, 0.62, 0.82, 0.95, 1.00, 1.00,
              1.00, 1.00, 0.98, 0.97, 0.96, 0.92, 0.80, 0.62, 0.48, 0.40, 0.35, 0.32],
    "office": [0.28, 0.27, 0.27, 0.27, 0.28, 0.32, 0.48, 0.75, 0.95, 1.00, 1.00, 0.98,
               0.95, 0.97, 0.96, 0.92, 0.80, 0.60, 0.45, 0.38, 0.34, 0.32, 0.30, 0.29],
}
SEASONAL_AMPLITUDE = {"household": 0.30, "farm": 0.20, "industry": 0.05, "trade": 0.15, "office": 0.20}
WEEKEND_FACTOR = {"household": 1.05, "farm": 1.0, "industry": 0.70, "trade": 0.80, "office": 0.40}


@dataclass(frozen=True)
class LoadSpec:
    bus: str
    peak_mw: float
    power_factor: float
    category: str


@dataclass(frozen=True)
class ProfileConfig:
    """Inputs of the synthetic load and weather generator."""

    loads: tuple[LoadSpec, ...] = ()
    wind_units: tuple[tuple[str, float], ...] = ()
    solar_units: tuple[tuple[str, float], ...] = ()
    renewable_peak_mw: float | None = 3.5
    horizon: int = 8760
    latitude_deg: float = 60.0
    weibull_shape: float = 2.0
    weibull_scale: float = 5.0
    wind_persistence: float = 0.95
    cut_in: float = 3.0
    rated_speed: float = 12.0
    cut_out: float = 25.0
    cloud_persistence: float = 0.9
    load_noise: float = 0.06
    weather_csv: str | None = None

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not self.cut_in < self.rated_speed < self.cut_out:
            raise ValueError("wind speeds must satisfy cut_in < rated_speed < cut_out")
        for ld in self.loads:
            if ld.peak_mw < 0:
                raise ValueError(f"negative peak load at bus {ld.bus}")
            if ld.category not in DIURNAL:
                raise ValueError(f"unknown load category {ld.category!r} at bus {ld.bus}")
            if not 0 < ld.power_factor <= 1:
                raise ValueError(f"power factor at bus {ld.bus} must lie in (0, 1]")
        if self.renewable_peak_mw is not None and self.renewable_peak_mw < 0:
            raise ValueError("renewable_peak_mw must be nonnegative")


@dataclass
class ProfileSet:
    """Hourly series. Load arrays are (n_load_buses, horizon) in MW / MVAr."""

    load_buses: tuple[str, ...]
    p_load: np.ndarray
    q_load: np.ndarray
    wind_speed: np.ndarray
    irradiance: np.ndarray
    generation: dict[str, np.ndarray]

    @property
    def horizon(self) -> int:
        return self.p_load.shape[1] if self.p_load.ndim == 2 else len(self.wind_speed)

    def equals(self, other: "ProfileSet") -> bool:
        return (self.load_buses == other.load_buses
                and np.array_equal(self.p_load, other.p_load)
                and np.array_equal(self.q_load, other.q_load)
                and np.array_equal(self.wind_speed, other.wind_speed)
                and np.array_equal(self.irradiance, other.irradiance)
                and self.generation.keys() == other.generation.keys()
                and all(np.array_equal(v, other.generation[k]) for k, v in self.generation.items()))


def _ar1(rng, n, rho):
    """Stationary unit-variance AR(1) series."""
    eps = rng.standard_normal(n)
    x = eps * math.sqrt(1 - rho * rho)
    x[0] = eps[0]
    return signal.lfilter([1.0], [1.0, -rho], x)


def wind_power_curve(speed, rated_mw, cut_in, rated_speed, cut_out):
    v = np.asarray(speed, dtype=float)
    out = np.zeros_like(v)
    ramp = (v >= cut_in) & (v < rated_speed)
    out[ramp] = rated_mw * (v[ramp] ** 3 - cut_in ** 3) / (rated_speed ** 3 - cut_in ** 3)
    out[(v >= rated_speed) & (v < cut_out)] = rated_mw
    return out


def _clear_sky(hours, latitude_deg):
    day = hours // 24
    hod = hours % 24 + 0.5
    decl = np.radians(23.45) * np.sin(2 * np.pi * (284 + day) / 365.0)
    lat = np.radians(latitude_deg)
    hour_angle = np.radians(15.0 * (hod - 12.0))
    sin_elev = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(hour_angle)
    return np.clip(sin_elev, 0.0, None)


def read_weather_csv(path: str | Path, horizon: int) -> dict[str, np.ndarray]:
    """Read ``hour, wind_speed_ms, irradiance, load_scale`` rows."""
    cols = {"wind_speed_ms": np.zeros(horizon), "irradiance": np.zeros(horizon), "load_scale": np.ones(horizon)}
    seen = np.zeros(horizon, bool)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"hour", *cols} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            h = int(row["hour"])
            if not 0 <= h < horizon:
                raise ValueError(f"{path}: hour {h} outside horizon {horizon}")
            for k in cols:
                cols[k][h] = float(row[k])
            seen[h] = True
    if not seen.all():
        raise ValueError(f"{path}: {int((~seen).sum())} hours missing")
    if (cols["load_scale"] < 0).any() or (cols["wind_speed_ms"] < 0).any() or (cols["irradiance"] < 0).any():
        raise ValueError(f"{path}: negative values")
    return cols


def generate_profiles(config: ProfileConfig, rng: np.random.Generator) -> ProfileSet:
    """Synthetic hourly load, wind and solar series.

    Loads follow a per-category diurnal shape with a winter-peaking seasonal
    factor, weekend adjustment and persistent multiplicative noise, scaled so
    each bus reaches its configured peak. Wind speed is a persistent Gaussian
    process mapped onto a Weibull marginal; solar output follows clear-sky
    elevation times a persistent cloud factor. When ``weather_csv`` is set,
    its columns replace the synthetic weather and load scaling.
    """
    H = config.horizon
    hours = np.arange(H)
    day = hours // 24
    hod = hours % 24
    weekend = (day % 7) >= 5
    season = np.cos(2 * np.pi * (day - 15) / 365.0)

    external = read_weather_csv(config.weather_csv, H) if config.weather_csv else None

    buses = tuple(ld.bus for ld in config.loads)
    p = np.zeros((len(buses), H))
    q = np.zeros((len(buses), H))
    for k, ld in enumerate(config.loads):
        noise = _ar1(rng, H, 0.9) * config.load_noise
        if external is not None:
            shape = external["load_scale"].copy()
        else:
            shape = np.asarray(DIURNAL[ld.category])[hod]
            shape = shape * (1 + SEASONAL_AMPLITUDE[ld.category] * season)
            shape = shape * np.where(weekend, WEEKEND_FACTOR[ld.category], 1.0)
            shape = shape * np.exp(noise)
        top = shape.max()
        series = ld.peak_mw * shape / top if top > 0 else np.zeros(H)
        p[k] = series
        q[k] = series * math.tan(math.acos(ld.power_factor))

    if external is not None:
        speed = external["wind_speed_ms"]
        irr = external["irradiance"]
    else:
        z = _ar1(rng, H, config.wind_persistence)
        u = special.ndtr(z)
        scale = config.weibull_scale * (1 + 0.15 * season)
        speed = scale * (-np.log1p(-np.clip(u, 0, 1 - 1e-16))) ** (1.0 / config.weibull_shape)
        cloud = 0.25 + 0.75 * special.ndtr(_ar1(rng, H, config.cloud_persistence) + 0.3)
        irr = _clear_sky(hours, config.latitude_deg) * cloud
        top = irr.max()
        irr = irr / top if top > 0 else irr

    gen = {}
    for gid, rated in config.wind_units:
        gen[gid] = wind_power_curve(speed, rated, config.cut_in, config.rated_speed, config.cut_out)
    for gid, rated in config.solar_units:
        gen[gid] = rated * np.asarray(irr, dtype=float)
    if gen and config.renewable_peak_mw is not None:
        total = sum(gen.values())
        top = float(np.max(total))
        if top > 0:
            f = config.renewable_peak_mw / top
            gen = {k: v * f for k, v in gen.items()}

    return ProfileSet(buses, p, q, np.asarray(speed, float), np.asarray(irr, float), gen)
