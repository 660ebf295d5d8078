"""Derivative-free least-squares fitting.

* :func:`nelder_mead_minimize` - bounded multi-start simplex search.
* :func:`fit_triplet` - triplet-rule time constants, amplitudes and the
  global scale that maps rule weight changes to conductance change (%).
* :func:`fit_stdp_window` - exponential pair-STDP window per branch.
* :func:`load_dataset_csv` / :func:`dataset_rows` - dataset CSV I/O.
* :func:`synthetic_dataset` - noise-free data generated by the rule.
* :func:`calibrate_device` - hinge-loss search of device constants.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from dataclasses import fields as dataclass_fields, replace as dc_replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize, nnls

from .device import DeviceParams
from .experiments import Bench, hinge, property_margins
from .protocols import ProtocolError, ProtocolKind, ProtocolSpec, TripletOrder, ms_to_s, s_to_ms
from .triplet import TripletParams, rule_components, simulate_rule

DATASET_COLUMNS = ["kind", "order", "dt1_ms", "dt2_ms", "T_ms", "freq_hz", "n_reps",
                   "dG_percent", "weight"]


class FitError(ValueError):
    pass


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DataRecord:
    protocol: ProtocolSpec
    measured: float
    weight: float = 1.0
    source: str = "EXTERNAL"

    def __post_init__(self):
        if not self.weight > 0:
            raise DatasetError(f"weight must be positive, got {self.weight}")
        if self.source not in ("SIMULATED", "EXTERNAL"):
            raise DatasetError(f"unknown source tag {self.source!r}")


@dataclass
class Dataset:
    records: list[DataRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def measured(self) -> np.ndarray:
        return np.array([r.measured for r in self.records], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([r.weight for r in self.records], dtype=float)

    def scaled(self, c: float) -> "Dataset":
        return Dataset([DataRecord(r.protocol, c * r.measured, r.weight, r.source)
                        for r in self.records])


@dataclass
class FitResult:
    params: TripletParams
    scale: float
    rmse: float
    iterations: int
    converged: bool
    seed: int

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "scale": self.scale, "rmse": self.rmse,
                "iterations": self.iterations, "converged": self.converged, "seed": self.seed}


# -- optimizer ---------------------------------------------------------------

@dataclass
class Minimum:
    x: np.ndarray
    fun: float
    nfev: int = 0
    converged: bool = False

    def __iter__(self):
        yield self.x
        yield self.fun


class _Box:
    """Smooth map between an unconstrained vector ``z`` and a box-bounded ``x``."""

    def __init__(self, bounds, n):
        if bounds is None:
            bounds = [(None, None)] * n
        if len(bounds) != n:
            raise ValueError(f"got {len(bounds)} bounds for {n} parameters")
        self.lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds], dtype=float)
        self.hi = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
        if np.any(self.lo > self.hi):
            raise ValueError("lower bound exceeds upper bound")
        self.pinned = self.lo == self.hi
        self.both = np.isfinite(self.lo) & np.isfinite(self.hi) & ~self.pinned
        self.lo_only = np.isfinite(self.lo) & ~np.isfinite(self.hi)
        self.hi_only = ~np.isfinite(self.lo) & np.isfinite(self.hi)

    def to_x(self, z):
        x = np.array(z, dtype=float)
        b = self.both
        x[b] = self.lo[b] + (self.hi[b] - self.lo[b]) / (1.0 + np.exp(-z[b]))
        x[self.lo_only] = self.lo[self.lo_only] + np.exp(z[self.lo_only])
        x[self.hi_only] = self.hi[self.hi_only] - np.exp(z[self.hi_only])
        x[self.pinned] = self.lo[self.pinned]
        return np.clip(x, self.lo, self.hi)

    def to_z(self, x):
        x = np.array(x, dtype=float)
        z = x.copy()
        b = self.both
        span = self.hi[b] - self.lo[b]
        frac = np.clip((x[b] - self.lo[b]) / span, 1e-9, 1 - 1e-9)
        z[b] = np.log(frac / (1.0 - frac))
        z[self.lo_only] = np.log(np.maximum(x[self.lo_only] - self.lo[self.lo_only], 1e-300))
        z[self.hi_only] = np.log(np.maximum(self.hi[self.hi_only] - x[self.hi_only], 1e-300))
        z[self.pinned] = 0.0
        return z


def nelder_mead_minimize(loss: Callable[[np.ndarray], float], x0: Sequence[float],
                         bounds: Sequence[tuple[float | None, float | None]] | None = None,
                         restarts: int = 4, seed: int = 0, maxfev: int = 4000,
                         xatol: float = 1e-10, fatol: float = 1e-14,
                         stop_at: float | None = None) -> Minimum:
    """Minimize ``loss`` inside a box with restarted Nelder-Mead.

    Bounds are enforced by optimizing an unconstrained vector pushed through
    a logistic (two-sided) or exponential (one-sided) map. Restart 0 starts
    at ``x0``; every later restart starts from the best point so far,
    perturbed by seeded Gaussian noise in the unconstrained space. The
    search stops early once the loss drops to ``stop_at`` or below.
    """
    x0 = np.asarray(x0, dtype=float)
    box = _Box(bounds, x0.size)
    rng = np.random.default_rng(seed)
    nfev = 0

    def fz(z):
        nonlocal nfev
        nfev += 1
        val = loss(box.to_x(z))
        return float(val) if np.isfinite(val) else np.inf

    best_z = box.to_z(x0)
    best_f = fz(best_z)
    converged = False
    free = ~box.pinned
    for k in range(max(restarts, 1)):
        z_start = best_z.copy()
        if k > 0:
            z_start[free] += rng.normal(0.0, 1.0, free.sum()) * np.maximum(0.1 * np.abs(best_z[free]), 0.5)
        f_start = fz(z_start)
        if not np.isfinite(f_start) and not np.isfinite(best_f):
            continue
        if not free.any():
            break
        res = minimize(fz, z_start, method="Nelder-Mead",
                       options={"maxfev": maxfev, "xatol": xatol, "fatol": fatol, "adaptive": True})
        cands = [(res.fun, res.x), (f_start, z_start)]
        for f, z in cands:
            if f < best_f:
                best_f, best_z = f, np.array(z)
                converged = bool(res.success)
        if stop_at is not None and best_f <= stop_at:
            break
    if not np.isfinite(best_f):
        raise FitError("loss is non-finite at every start")
    return Minimum(box.to_x(best_z), float(best_f), nfev, converged)


# -- triplet-rule fitting ----------------------------------------------------

def protocol_spikes(spec: ProtocolSpec):
    return spec.build().spike_times()


def rule_delta_w(spec: ProtocolSpec, params: TripletParams) -> float:
    return simulate_rule(protocol_spikes(spec), params)


def residuals(params: TripletParams, scale: float, dataset: Dataset,
              evaluator: Callable[[ProtocolSpec, TripletParams], float] = rule_delta_w) -> np.ndarray:
    """Weighted residuals ``w_k * (scale * dw_model_k - measured_k)`` in % units."""
    if len(dataset) == 0:
        raise FitError("dataset is empty")
    try:
        model = np.array([evaluator(r.protocol, params) for r in dataset], dtype=float)
    except ProtocolError as exc:
        raise FitError(f"invalid protocol in dataset: {exc}") from exc
    return dataset.weights * (scale * model - dataset.measured)


def _design(spikes, taus, mode):
    p = TripletParams(0, 0, 0, 0, *taus, mode=mode)
    rows = []
    for sp in spikes:
        c2p, c3p, c2m, c3m = rule_components(sp, p)
        rows.append((c2p, c3p, -c2m, -c3m))
    return np.array(rows)


DEFAULT_TAU_BOUNDS = ((1e-3, 1.0),) * 4
TAU_RIDGE = 1e-10


def fit_triplet(dataset: Dataset, init: TripletParams | None = None,
                bounds: Sequence[tuple[float, float]] | None = None, seed: int = 0,
                restarts: int = 4, maxfev: int = 3000) -> FitResult:
    """Least-squares fit of the triplet rule plus a global scale.

    For fixed time constants the model is linear in ``scale * amplitudes``,
    so those four products are solved exactly by non-negative least squares
    and only the four time constants (in log space) go to the simplex search.
    The scale is then split off with the normalization
    ``a2_plus + a2_minus = 1``.

    ``bounds`` are ``(lo, hi)`` pairs in seconds for
    ``(tau_plus, tau_minus, tau_x, tau_y)``.
    """
    init = init or TripletParams()
    if len(dataset) == 0:
        raise FitError("dataset is empty")
    distinct = {r.protocol for r in dataset}
    if len(distinct) < 4:
        raise FitError(f"need at least 4 distinct protocols to identify the rule, got {len(distinct)}")
    try:
        spikes = [protocol_spikes(r.protocol) for r in dataset]
    except ProtocolError as exc:
        raise FitError(f"invalid protocol in dataset: {exc}") from exc
    w = dataset.weights
    b = w * dataset.measured
    bounds = list(bounds or DEFAULT_TAU_BOUNDS)
    log_bounds = [(math.log(lo), math.log(hi)) for lo, hi in bounds]

    def solve(log_taus):
        A = _design(spikes, np.exp(log_taus), init.mode) * w[:, None]
        coef, _ = nnls(A, b)
        r = A @ coef - b
        return coef, float(r @ r)

    x0 = np.clip(np.log(init.taus), [lo for lo, _ in log_bounds], [hi for _, hi in log_bounds])
    scale_b = float(b @ b) or 1.0

    def loss(z):
        # the weak ridge picks a unique point along directions the data cannot
        # resolve (a3 and its trace time constant enter as one product when a
        # protocol samples that trace at a single lag)
        return solve(z)[1] / scale_b + TAU_RIDGE * float(np.sum((z - x0) ** 2))

    best = nelder_mead_minimize(loss, x0, log_bounds, restarts=restarts, seed=seed,
                                maxfev=maxfev, xatol=1e-12, fatol=1e-30)
    coef, _ = solve(best.x)
    c2p, c3p, c2m, c3m = coef
    scale = c2p + c2m
    if scale > 0:
        amps = coef / scale
    else:
        scale, amps = 0.0, np.zeros(4)
    taus = np.exp(best.x)
    params = TripletParams(float(amps[0]), float(amps[2]), float(amps[1]), float(amps[3]),
                           *map(float, taus), mode=init.mode)
    r = residuals(params, scale, dataset)
    rmse = float(np.sqrt(np.mean(r ** 2)))
    return FitResult(params, float(scale), rmse, best.nfev, best.converged, seed)


def _exp_branch(t, y):
    """Fit ``y = A * exp(-t / tau)`` for ``t > 0``; returns ``(A, tau)``."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    if np.all(y > 0):
        slope, icpt = np.polyfit(t, np.log(y), 1)
        a0 = math.exp(icpt)
        tau0 = -1.0 / slope if slope < 0 else float(np.max(t))
    else:
        a0, tau0 = max(float(np.max(np.abs(y))), 1e-12), float(np.mean(t))
    scale_y = float(y @ y) or 1.0

    def loss(p):
        a, tau = p
        r = a * np.exp(-t / tau) - y
        return float(r @ r) / scale_y

    tmax = float(np.max(t))
    best = nelder_mead_minimize(loss, [a0, min(max(tau0, 1e-3 * tmax), 1e3 * tmax)],
                                [(0.0, None), (1e-3 * tmax, 1e3 * tmax)],
                                restarts=2, seed=0, xatol=1e-13, fatol=1e-30)
    return float(best.x[0]), float(best.x[1])


def fit_stdp_window(data: Dataset | Iterable[tuple[float, float]]
                    ) -> tuple[float, float, float, float]:
    """Fit ``A+ exp(-dt/tau+)`` (dt > 0) and ``-A- exp(dt/tau-)`` (dt < 0).

    ``data`` is a pairs-only :class:`Dataset` or ``(dt_seconds, dG_percent)``
    tuples. Returns ``(A_plus, tau_plus, A_minus, tau_minus)``.
    """
    if isinstance(data, Dataset):
        pts = []
        for r in data:
            if r.protocol.kind not in (ProtocolKind.PAIR, ProtocolKind.FREQ_PAIR) or r.protocol.dt is None:
                raise FitError("fit_stdp_window needs a pairs-only dataset")
            pts.append((r.protocol.dt, r.measured))
    else:
        pts = [(float(dt), float(y)) for dt, y in data]
    pos = [(dt, y) for dt, y in pts if dt > 0]
    neg = [(-dt, -y) for dt, y in pts if dt < 0]
    if len(pos) < 2 or len(neg) < 2:
        raise FitError(f"need >= 2 points per branch, got {len(pos)} positive and {len(neg)} negative")
    a_p, tau_p = _exp_branch(*zip(*pos))
    a_m, tau_m = _exp_branch(*zip(*neg))
    return a_p, tau_p, a_m, tau_m


# -- dataset CSV -------------------------------------------------------------

def _num(text, name, lineno, cast=float):
    try:
        val = cast(text)
    except ValueError:
        raise DatasetError(f"row {lineno}: field {name!r} is not numeric: {text!r}") from None
    if cast is float and not math.isfinite(val):
        raise DatasetError(f"row {lineno}: field {name!r} must be finite")
    return val


def _opt(row, name, lineno, cast=float):
    text = (row.get(name) or "").strip()
    return None if text == "" else _num(text, name, lineno, cast)


def load_dataset_csv(path) -> Dataset:
    """Parse a dataset CSV (see ``DATASET_COLUMNS``); rows are tagged EXTERNAL."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetError(f"{path}: missing header row")
        missing = [c for c in DATASET_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DatasetError(f"{path}: header lacks column(s) {', '.join(missing)}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            records.append(_parse_row(row, lineno))
    return Dataset(records)


def _parse_row(row, lineno) -> DataRecord:
    kind_text = (row.get("kind") or "").strip().upper()
    try:
        kind = ProtocolKind(kind_text)
    except ValueError:
        raise DatasetError(f"row {lineno}: unknown protocol kind {kind_text!r}") from None
    dt1 = _opt(row, "dt1_ms", lineno)
    dt2 = _opt(row, "dt2_ms", lineno)
    T = _opt(row, "T_ms", lineno)
    freq = _opt(row, "freq_hz", lineno)
    n_reps = _opt(row, "n_reps", lineno, int)
    measured = _opt(row, "dG_percent", lineno)
    weight = _opt(row, "weight", lineno)
    if measured is None:
        raise DatasetError(f"row {lineno}: dG_percent is required")
    kw = {}
    if n_reps is not None:
        kw["n_reps"] = n_reps
    if freq is not None:
        kw["rep_freq"] = freq
    order_text = (row.get("order") or "").strip().upper()

    def need(val, name):
        if val is None:
            raise DatasetError(f"row {lineno}: {kind.value} needs {name}")
        return ms_to_s(val)

    if kind in (ProtocolKind.PAIR, ProtocolKind.FREQ_PAIR):
        kw["dt"] = need(dt1, "dt1_ms")
        if kind is ProtocolKind.FREQ_PAIR and freq is None:
            raise DatasetError(f"row {lineno}: FREQ_PAIR needs freq_hz")
    elif kind is ProtocolKind.TRIPLET:
        try:
            kw["order"] = TripletOrder(order_text)
        except ValueError:
            raise DatasetError(f"row {lineno}: unknown triplet order {order_text!r}") from None
        kw["dt1"] = need(dt1, "dt1_ms")
        kw["dt2"] = need(dt2, "dt2_ms")
    elif kind is ProtocolKind.QUADRUPLET:
        kw["T"] = need(T, "T_ms")
        kw["dt"] = need(dt1, "dt1_ms")
    spec = ProtocolSpec(kind, **kw)
    try:
        spec.build()
    except ProtocolError as exc:
        raise DatasetError(f"row {lineno}: invalid protocol: {exc}") from None
    try:
        return DataRecord(spec, measured, 1.0 if weight is None else weight)
    except DatasetError as exc:
        raise DatasetError(f"row {lineno}: {exc}") from None


def dataset_rows(dataset: Dataset) -> list[dict]:
    """Rows in the dataset CSV schema (``None`` for unused fields)."""
    rows = []
    for r in dataset:
        p = r.protocol
        row = dict.fromkeys(DATASET_COLUMNS)
        row["kind"] = p.kind.value
        if p.kind in (ProtocolKind.PAIR, ProtocolKind.FREQ_PAIR):
            row["dt1_ms"] = s_to_ms(p.dt)
            row["freq_hz"] = p.rep_freq
        elif p.kind is ProtocolKind.TRIPLET:
            row["order"] = p.order.value
            row["dt1_ms"], row["dt2_ms"] = s_to_ms(p.dt1), s_to_ms(p.dt2)
            row["freq_hz"] = p.rep_freq
        elif p.kind is ProtocolKind.QUADRUPLET:
            row["T_ms"], row["dt1_ms"] = s_to_ms(p.T), s_to_ms(p.dt)
            row["freq_hz"] = p.rep_freq
        row["n_reps"] = p.n_reps
        row["dG_percent"] = r.measured
        row["weight"] = r.weight
        rows.append(row)
    return rows


# -- device calibration ------------------------------------------------------

@dataclass
class CalibrationReport:
    params: DeviceParams
    loss: float
    margins: dict[str, list[float]]
    evaluations: int

    @property
    def satisfied(self) -> bool:
        return self.loss == 0.0

    def violated(self) -> list[str]:
        return [k for k, v in self.margins.items() if any(not m > 0 for m in v)]

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "loss": self.loss, "satisfied": self.satisfied,
                "violated": self.violated(), "evaluations": self.evaluations,
                "margins": self.margins}


CALIBRATION_TARGETS = ("stdp_sign", "stdp_decay", "triplet_asymmetry", "quadruplet_asymmetry",
                       "frequency_crossover", "normalization", "accumulation", "hysteresis")


def calibrate_device(targets: Sequence[str] = CALIBRATION_TARGETS,
                     search_space: dict[str, tuple[float, float]] | None = None, seed: int = 0,
                     base: DeviceParams | None = None, bench: Bench | None = None,
                     restarts: int = 3, maxfev: int = 1500) -> CalibrationReport:
    """Hinge-loss search of device constants against named plasticity laws.

    ``search_space`` maps :class:`DeviceParams` field names to ``(lo, hi)``
    bounds; other fields stay at ``base``. Strictly positive fields are
    searched in log space. The search stops at the first point with zero
    loss; otherwise the best point is returned with its margins.
    """
    base = base or DeviceParams()
    bench = bench or Bench()
    search_space = dict(search_space or {})
    names = list(search_space)
    valid = {f.name for f in dataclass_fields(DeviceParams)}
    bad = [n for n in names if n not in valid]
    if bad:
        raise ValueError(f"unknown device parameter(s) in search space: {', '.join(bad)}")
    logged = [search_space[n][0] > 0 and n != "x_sat" for n in names]
    bounds = []
    for n, lg in zip(names, logged):
        lo, hi = search_space[n]
        bounds.append((math.log(lo), math.log(hi)) if lg else (lo, hi))

    def build(vec):
        vals = {n: (math.exp(v) if lg else float(v)) for n, v, lg in zip(names, vec, logged)}
        return dc_replace(base, **vals)

    def loss(vec):
        try:
            params = build(vec)
            return hinge(property_margins(params, bench, targets))
        except (ValueError, OverflowError, ZeroDivisionError):
            return math.inf

    x0 = []
    for n, lg, (lo, hi) in zip(names, logged, bounds):
        v = getattr(base, n)
        v = math.log(v) if lg else v
        x0.append(min(max(v, lo), hi))
    evaluations = 1
    if names and loss(x0) > 0:
        best = nelder_mead_minimize(loss, x0, bounds, restarts=restarts, seed=seed,
                                    maxfev=maxfev, stop_at=0.0)
        params, evaluations = build(best.x), best.nfev
    else:
        params = build(x0)
    margins = property_margins(params, bench, targets)
    return CalibrationReport(params, hinge(margins), margins, evaluations)


def standard_protocols() -> list[ProtocolSpec]:
    """Pair grid at +-5..100 ms plus both triplet orders at (5, 5) ms."""
    specs = [ProtocolSpec(ProtocolKind.PAIR, dt=s * ms_to_s(d))
             for d in (5, 10, 20, 50, 100) for s in (1, -1)]
    specs += [ProtocolSpec(ProtocolKind.TRIPLET, dt1=5e-3, dt2=5e-3, order=o) for o in TripletOrder]
    return specs


def synthetic_dataset(params: TripletParams, scale: float,
                      protocols: Sequence[ProtocolSpec] | None = None) -> Dataset:
    """Noise-free records ``scale * dw`` generated by the rule itself."""
    protocols = standard_protocols() if protocols is None else protocols
    return Dataset([DataRecord(p, scale * rule_delta_w(p, params), source="SIMULATED")
                    for p in protocols])
