"""Time-optimal adiabatic ramps between laser waypoints (variational brachistochrone).

A ramp is a cubic-spline path through waypoints in (omega, delta) space,
composed with a monotone reparametrization theta(s) that slows the sweep
where the spectral gap is small:

    d theta / ds = (1/A) (g^2 / ||dH/ds||)^q,   A normalizing theta(1) = 1.

The rate is evaluated at theta(s) (self-consistent form) by default; the
literal form, with the rate evaluated at s, is available via ``mode``.
Durations are set by the time functional T_eps = max{T : F_T <= 1 - eps},
resolved by a geometric scan with a persistent-pass rule plus bisection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import dual_annealing

from .errors import InfeasibleError, InputError, NumericalError
from .plaquette import (
    PlaquetteConfig,
    _batched_hamiltonians,
    _magnus_segment,
    _sector_ops,
)
from .pulses import LaserPoint, RampSegment, linear_ramp  # noqa: F401  (linear_ramp re-exported)

MAX_INTERIOR_POINTS = 4
DEFAULT_SECTORS = (1, 2, 3, 4)
GAP_FLOOR = 1e-9
TABLE_NODES = 1025
QUAD_NODES = 513
SCAN_GROWTH = 1.5
SCAN_CAP_US = 1e3
BISECT_REL_WIDTH = 1e-2
PERSISTENT_PASSES = 3
FIDELITY_STEP_NORM = 0.35
FIDELITY_MIN_STEPS = 192


@dataclass(frozen=True)
class SplinePath:
    """Natural cubic spline through M+2 waypoints at s_m = m/(M+1).

    M = 0 degenerates to the straight segment. Derivatives come from the
    spline coefficients. Calling clamps omega at 0 from below; derivatives
    are those of the unclamped spline.
    """

    start: LaserPoint
    end: LaserPoint
    interior: tuple[tuple[float, float], ...] = ()
    _om_spline: CubicSpline = field(init=False, repr=False, compare=False)
    _de_spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = len(self.interior)
        if m > MAX_INTERIOR_POINTS:
            raise InputError(f"at most {MAX_INTERIOR_POINTS} interior waypoints supported")
        nodes = np.linspace(0.0, 1.0, m + 2)
        oms = np.array([self.start.omega, *(p[0] for p in self.interior), self.end.omega])
        des = np.array([self.start.delta, *(p[1] for p in self.interior), self.end.delta])
        object.__setattr__(self, "_om_spline", CubicSpline(nodes, oms, bc_type="natural"))
        object.__setattr__(self, "_de_spline", CubicSpline(nodes, des, bc_type="natural"))

    def __call__(self, s):
        return np.maximum(self._om_spline(s), 0.0), self._de_spline(s)

    def derivative(self, s):
        return self._om_spline(s, 1), self._de_spline(s, 1)

    def second_derivative(self, s):
        return self._om_spline(s, 2), self._de_spline(s, 2)


def spline_path(start: LaserPoint, end: LaserPoint, interior_points=()) -> SplinePath:
    """Cubic path through the waypoints; M=0 gives the straight segment."""
    return SplinePath(start=start, end=end, interior=tuple((float(o), float(d)) for o, d in interior_points))


def _sector_list(sectors) -> tuple[int, ...]:
    out = tuple(sorted(set(int(n) for n in sectors)))
    if not out or any(n < 1 or n > 4 for n in out):
        raise InputError("target sectors must be a nonempty subset of {1, 2, 3, 4}")
    return out


class PathTables:
    """Dense tables of spectral quantities along a base path.

    Tracks, per target sector, the eigenstate connected to the initial index
    (default: the k=0 product state at omega=0) and tabulates its energy, the
    gap to the rest of the spectrum, and the spectral norms of dH/dtheta and
    d2H/dtheta2 on a uniform theta grid.
    """

    def __init__(
        self,
        path: SplinePath,
        config: PlaquetteConfig,
        sectors,
        nodes: int = TABLE_NODES,
        initial_indices: dict[int, int] | None = None,
    ):
        self.path = path
        self.config = config
        self.sectors = _sector_list(sectors)
        theta = np.linspace(0.0, 1.0, nodes)
        self.theta = theta
        om, de = path(theta)
        d_om, d_de = path.derivative(theta)
        d2_om, d2_de = path.second_derivative(theta)
        self.omega, self.delta = np.asarray(om, float), np.asarray(de, float)

        self.tracked_index: dict[int, np.ndarray] = {}
        self.tracked_energy: dict[int, np.ndarray] = {}
        self.tracked_vectors: dict[int, np.ndarray] = {}
        self.gap_by_sector: dict[int, np.ndarray] = {}
        dnorm = np.zeros((len(self.sectors), nodes))
        d2norm = np.zeros((len(self.sectors), nodes))

        for si, n in enumerate(self.sectors):
            ops = _sector_ops(n, config)
            hams = _batched_hamiltonians(ops, self.omega, self.delta)
            w, v = np.linalg.eigh(hams)
            if initial_indices and n in initial_indices:
                i0 = int(initial_indices[n])
            else:
                if self.omega[0] > 1e-9:
                    raise InputError(
                        "path starts at omega > 0; pass initial_indices for tracking"
                    )
                i0 = int(np.argmin(np.abs(w[0])))  # k=0 state has E=0 at omega=0
            idx = np.empty(nodes, dtype=int)
            idx[0] = i0
            vec = v[0][:, i0]
            for i in range(1, nodes):
                ov = np.abs(v[i].conj().T @ vec) ** 2
                j = int(np.argmax(ov))
                idx[i] = j
                vec = v[i][:, j]
            rows = np.arange(nodes)
            self.tracked_index[n] = idx
            self.tracked_energy[n] = w[rows, idx]
            self.tracked_vectors[n] = v[rows, :, idx]
            others = np.abs(w - w[rows, idx][:, None])
            others[rows, idx] = np.inf
            self.gap_by_sector[n] = np.min(others, axis=1)

            dH = (
                np.asarray(d_om, float)[:, None, None] * ops.a_omega
                + np.asarray(d_de, float)[:, None, None] * ops.b_delta
            )
            d2H = (
                np.asarray(d2_om, float)[:, None, None] * ops.a_omega
                + np.asarray(d2_de, float)[:, None, None] * ops.b_delta
            )
            dnorm[si] = np.max(np.abs(np.linalg.eigvalsh(dH)), axis=1)
            d2norm[si] = np.max(np.abs(np.linalg.eigvalsh(d2H)), axis=1)

        self.gap = np.min(np.stack([self.gap_by_sector[n] for n in self.sectors]), axis=0)
        self.dnorm = np.max(dnorm, axis=0)
        self.d2norm = np.max(d2norm, axis=0)

    def end_indices(self) -> dict[int, int]:
        return {n: int(self.tracked_index[n][-1]) for n in self.sectors}


def gap_and_norms(path, s, config: PlaquetteConfig, sectors, initial_indices=None):
    """(g(s), ||dH/ds||, ||d2H/ds2||) along the base path.

    g is the tracked-state gap minimized over sectors; norms are spectral
    norms maximized over sectors. Gaps below 1e-9 flag a level crossing.
    """
    tables = PathTables(path, config, sectors, initial_indices=initial_indices)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    g = np.interp(s, tables.theta, tables.gap)
    d1 = np.interp(s, tables.theta, tables.dnorm)
    d2 = np.interp(s, tables.theta, tables.d2norm)
    if np.any(g < GAP_FLOOR):
        raise NumericalError("level crossing: tracked-state gap below 1e-9")
    if s.size == 1:
        return float(g[0]), float(d1[0]), float(d2[0])
    return g, d1, d2


@dataclass(frozen=True)
class ThetaTable:
    """Tabulated monotone reparametrization theta(s) with its rate data."""

    s_grid: np.ndarray
    theta_grid: np.ndarray
    mode: str
    q: float
    norm_const: float  # A in d theta/ds = h/A

    def __post_init__(self):
        d = np.diff(self.theta_grid)
        if np.any(d <= 0):
            raise NumericalError("theta table is not strictly increasing")

    def interpolator(self) -> PchipInterpolator:
        return PchipInterpolator(self.s_grid, self.theta_grid)


def _rate_h(tables: PathTables, q: float) -> np.ndarray:
    g = tables.gap
    if np.any(g < GAP_FLOOR):
        raise NumericalError("level crossing: tracked-state gap below 1e-9")
    dn = np.maximum(tables.dnorm, 1e-300)
    h = (g * g / dn) ** q
    if not np.all(np.isfinite(h)):
        raise NumericalError("nonfinite reparametrization rate")
    return h


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def reparametrize(
    tables: PathTables,
    q: float,
    mode: str = "self_consistent",
    nodes: int = TABLE_NODES,
) -> ThetaTable:
    """Solve the slowdown law for theta(s).

    ``self_consistent`` evaluates the rate at theta(s) (separable quadrature
    of the ODE); ``literal`` evaluates it at s as written in the source rule.
    Constant rate gives theta(s) = s in both modes.
    """
    if not (0.0 < q <= 2.0):
        raise InputError("q must lie in (0, 2]")
    if mode not in ("self_consistent", "literal"):
        raise InputError(f"unknown reparametrization mode {mode!r}")
    h = _rate_h(tables, q)
    grid = tables.theta
    if mode == "literal":
        theta_unnorm = _cumtrapz(h, grid)
        a_const = theta_unnorm[-1]
        theta = theta_unnorm / a_const
        s_grid = grid.copy()
    else:
        s_unnorm = _cumtrapz(1.0 / h, grid)
        c_const = s_unnorm[-1]
        s_of_theta = s_unnorm / c_const
        s_grid = np.linspace(0.0, 1.0, nodes)
        theta = np.interp(s_grid, s_of_theta, grid)
        a_const = 1.0 / c_const  # d theta/ds = h(theta)/A with A = 1/c
    theta[0], theta[-1] = 0.0, 1.0
    theta = np.maximum.accumulate(theta)
    eps = 1e-15
    for i in range(1, len(theta)):  # enforce strict monotonicity against flat spots
        if theta[i] <= theta[i - 1]:
            theta[i] = theta[i - 1] + eps
    theta[-1] = 1.0
    return ThetaTable(s_grid=s_grid, theta_grid=theta, mode=mode, q=q, norm_const=a_const)


@dataclass(frozen=True)
class AdiabaticPath:
    """A spline path composed with a tabulated reparametrization.

    Callable on s in [0, 1]; returns the modified-path laser point(s). The
    duration is the ramp time this path is meant to be driven over, and
    ``sectors`` are the excitation sectors the slowdown was designed for.
    """

    base: SplinePath
    theta: ThetaTable
    duration: float
    sectors: tuple[int, ...]
    _theta_interp: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_theta_interp", self.theta.interpolator())

    @property
    def q(self) -> float:
        return self.theta.q

    @property
    def interior(self):
        return self.base.interior

    def __call__(self, s):
        return self.base(self._theta_interp(np.clip(s, 0.0, 1.0)))

    def endpoints(self) -> tuple[LaserPoint, LaserPoint]:
        o0, d0 = self.base(0.0)
        o1, d1 = self.base(1.0)
        return LaserPoint(float(o0), float(d0)), LaserPoint(float(o1), float(d1))

    def as_segment(self, duration: float | None = None) -> RampSegment:
        return RampSegment(path=self, duration=self.duration if duration is None else duration)

    def to_dict(self) -> dict:
        p0, p1 = self.endpoints()
        return {
            "start": [p0.omega, p0.delta],
            "end": [p1.omega, p1.delta],
            "interior": [list(p) for p in self.base.interior],
            "q": self.q,
            "mode": self.theta.mode,
            "duration": self.duration,
            "sectors": list(self.sectors),
            "theta_s": self.theta.s_grid.tolist(),
            "theta": self.theta.theta_grid.tolist(),
            "norm_const": self.theta.norm_const,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdiabaticPath":
        base = SplinePath(
            start=LaserPoint(*map(float, d["start"])),
            end=LaserPoint(*map(float, d["end"])),
            interior=tuple(tuple(map(float, p)) for p in d["interior"]),
        )
        table = ThetaTable(
            s_grid=np.asarray(d["theta_s"], float),
            theta_grid=np.asarray(d["theta"], float),
            mode=d["mode"],
            q=float(d["q"]),
            norm_const=float(d["norm_const"]),
        )
        return cls(
            base=base,
            theta=table,
            duration=float(d["duration"]),
            sectors=tuple(int(n) for n in d["sectors"]),
        )


def make_adiabatic_path(
    start: LaserPoint,
    end: LaserPoint,
    interior=(),
    q: float = 0.75,
    config: PlaquetteConfig | None = None,
    sectors=DEFAULT_SECTORS,
    mode: str = "self_consistent",
    duration: float = 0.0,
    initial_indices: dict[int, int] | None = None,
) -> AdiabaticPath:
    """Build the reparametrized path for given waypoints and exponent q."""
    if config is None:
        raise InputError("config is required to build the reparametrization")
    base = spline_path(start, end, interior)
    tables = PathTables(base, config, sectors, initial_indices=initial_indices)
    theta = reparametrize(tables, q, mode=mode)
    return AdiabaticPath(base=base, theta=theta, duration=duration, sectors=_sector_list(sectors))


def _fidelity_steps(duration: float, norm_bound: float) -> int:
    return max(FIDELITY_MIN_STEPS, int(np.ceil(duration * norm_bound / FIDELITY_STEP_NORM)))


def ramp_fidelity(
    path,
    duration: float,
    config: PlaquetteConfig,
    sectors=DEFAULT_SECTORS,
    initial_indices: dict[int, int] | None = None,
    step_norm: float = FIDELITY_STEP_NORM,
) -> dict[int, float]:
    """Per-sector fidelity |<psi(T)|E_target(T)>|^2 of driving along ``path``.

    The state starts in the tracked eigenstate at s=0 and is compared with
    the tracked instantaneous eigenstate at s=1.
    """
    if duration <= 0:
        raise InputError("ramp duration must be > 0")
    sectors = _sector_list(sectors)
    out = {}
    for n in sectors:
        ops = _sector_ops(n, config)
        # endpoint tracking along the (possibly modified) path
        probe = np.linspace(0.0, 1.0, 513)
        om, de = path(probe)
        hams = _batched_hamiltonians(ops, np.asarray(om, float), np.asarray(de, float))
        w, v = np.linalg.eigh(hams)
        if initial_indices and n in initial_indices:
            i0 = int(initial_indices[n])
        else:
            if float(np.asarray(om, float)[0]) > 1e-9:
                raise InputError("path starts at omega > 0; pass initial_indices")
            i0 = int(np.argmin(np.abs(w[0])))
        idx = i0
        vec = v[0][:, i0]
        for i in range(1, len(probe)):
            ov = np.abs(v[i].conj().T @ vec) ** 2
            idx = int(np.argmax(ov))
            vec = v[i][:, idx]
        target = vec
        psi0 = v[0][:, i0]

        norm_bound = ops.norm_c + float(np.max(np.abs(om))) * ops.norm_a + float(
            np.max(np.abs(de))
        ) * ops.norm_b
        steps = max(FIDELITY_MIN_STEPS, int(np.ceil(duration * norm_bound / step_norm)))
        u = _magnus_segment(
            ops,
            lambda s: path(s)[0],
            lambda s: path(s)[1],
            duration,
            steps,
        )
        amp = np.vdot(target, u @ psi0)
        out[n] = float(np.abs(amp) ** 2)
    return out


@dataclass
class TimeFunctionalResult:
    t_eps: float
    degenerate: bool
    evaluations: list[tuple[float, float]]  # (T, min-sector fidelity)

    def __float__(self):
        return self.t_eps


def time_functional(
    path,
    epsilon: float,
    config: PlaquetteConfig,
    sectors=DEFAULT_SECTORS,
    t_start: float = 1e-3,
    initial_indices: dict[int, int] | None = None,
) -> TimeFunctionalResult:
    """T_eps: shortest duration beyond which the ramp stays eps-adiabatic.

    Geometric scan (factor 1.5) from t_start until the min-sector fidelity
    exceeds 1 - eps for three consecutive points, then bisection between the
    last failing and first persistently-passing duration; returns the upper
    bisection edge. Fidelity oscillates in T, so the persistent-pass rule is
    the operational reading of max{T : F_T <= 1 - eps}.
    """
    if not (0.0 < epsilon < 0.5):
        raise InputError("epsilon must lie in (0, 0.5)")
    target = 1.0 - epsilon
    evals: list[tuple[float, float]] = []

    def passes(T: float) -> bool:
        f = min(ramp_fidelity(path, T, config, sectors, initial_indices).values())
        evals.append((T, f))
        return f > target

    T = t_start
    history: list[tuple[float, bool]] = []
    while True:
        ok = passes(T)
        history.append((T, ok))
        run = 0
        for _, o in reversed(history):
            if o:
                run += 1
            else:
                break
        if run >= PERSISTENT_PASSES:
            break
        T *= SCAN_GROWTH
        if T > SCAN_CAP_US:
            raise InfeasibleError(f"scan cap exceeded: T_eps > {SCAN_CAP_US} us")

    if all(ok for _, ok in history[:PERSISTENT_PASSES]) and len(history) == PERSISTENT_PASSES:
        return TimeFunctionalResult(t_eps=t_start, degenerate=True, evaluations=evals)

    first_pass = history[-PERSISTENT_PASSES][0]
    last_fail = max(t for t, ok in history if not ok)
    lo, hi = last_fail, first_pass
    while (hi - lo) / hi > BISECT_REL_WIDTH:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return TimeFunctionalResult(t_eps=hi, degenerate=False, evaluations=evals)


def _composite_simpson(y: np.ndarray, x: np.ndarray) -> float:
    n = len(x) - 1
    h = x[1] - x[0]
    if n % 2:
        raise ValueError("Simpson needs an even interval count")
    return float(h / 3.0 * (y[0] + y[-1] + 4 * np.sum(y[1:-1:2]) + 2 * np.sum(y[2:-1:2])))


def adiabatic_upper_bound(
    path: AdiabaticPath,
    epsilon: float,
    config: PlaquetteConfig,
    sectors=DEFAULT_SECTORS,
    nodes: int = QUAD_NODES,
    initial_indices: dict[int, int] | None = None,
) -> float:
    """Adiabatic-theorem duration bound for the modified path.

    (1/eps) [ ||dH||/g^2 |_{s=0} + ||dH||/g^2 |_{s=1}
              + int ||d2H||/g^2 ds + int ||dH||^2/g^3 ds ]

    with all quantities on the reparametrized path; Simpson quadrature on
    ``nodes`` points (>= 513 by default).
    """
    sectors = _sector_list(sectors)
    tables = PathTables(path.base, config, sectors, initial_indices=initial_indices)
    if np.max(tables.dnorm) == 0.0 and np.max(tables.d2norm) == 0.0:
        return 0.0  # constant path: dH/ds vanishes identically
    h = _rate_h(tables, path.q)
    h_spline = CubicSpline(tables.theta, h)

    if nodes % 2 == 0:
        nodes += 1
    s = np.linspace(0.0, 1.0, nodes)
    theta_interp = path.theta.interpolator()
    th = np.clip(theta_interp(s), 0.0, 1.0)

    if path.theta.mode == "literal":
        th_p = h_spline(s) / path.theta.norm_const
        th_pp = h_spline(s, 1) / path.theta.norm_const
    else:
        th_p = h_spline(th) / path.theta.norm_const
        th_pp = h_spline(th, 1) * th_p / path.theta.norm_const

    g = np.interp(th, tables.theta, tables.gap)
    if np.any(g < GAP_FLOOR):
        raise NumericalError("level crossing: tracked-state gap below 1e-9")
    base_d1 = np.interp(th, tables.theta, tables.dnorm)
    base_d2 = np.interp(th, tables.theta, tables.d2norm)
    dnorm = np.abs(th_p) * base_d1
    d2norm = np.abs(th_pp) * base_d1 + th_p * th_p * base_d2

    boundary = dnorm[0] / g[0] ** 2 + dnorm[-1] / g[-1] ** 2
    int1 = _composite_simpson(d2norm / g**2, s)
    int2 = _composite_simpson(dnorm**2 / g**3, s)
    return float((boundary + int1 + int2) / epsilon)


@dataclass
class RampReport:
    """Outcome of sizing one ramp: fidelities, gaps, T_eps, theorem bound."""

    t_eps: float
    epsilon: float
    fidelities: dict[int, float]
    min_gap: dict[int, float]
    bound: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "t_eps": self.t_eps,
            "epsilon": self.epsilon,
            "fidelities": {str(k): v for k, v in self.fidelities.items()},
            "min_gap": {str(k): v for k, v in self.min_gap.items()},
            "bound": self.bound,
            "degenerate": self.degenerate,
        }


def evaluate_ramp(
    path: AdiabaticPath,
    epsilon: float,
    config: PlaquetteConfig,
    sectors=DEFAULT_SECTORS,
    initial_indices: dict[int, int] | None = None,
    t_start: float = 1e-3,
) -> tuple[AdiabaticPath, RampReport]:
    """Size a path via the time functional and report its properties."""
    sectors = _sector_list(sectors)
    tf = time_functional(path, epsilon, config, sectors, t_start, initial_indices)
    sized = AdiabaticPath(base=path.base, theta=path.theta, duration=tf.t_eps, sectors=sectors)
    fids = ramp_fidelity(sized, tf.t_eps, config, sectors, initial_indices)
    tables = PathTables(path.base, config, sectors, initial_indices=initial_indices)
    gaps = {n: float(np.min(tables.gap_by_sector[n])) for n in sectors}
    bound = adiabatic_upper_bound(sized, epsilon, config, sectors, initial_indices=initial_indices)
    report = RampReport(
        t_eps=tf.t_eps,
        epsilon=epsilon,
        fidelities=fids,
        min_gap=gaps,
        bound=bound,
        degenerate=tf.degenerate,
    )
    return sized, report


_PENALTY = 1e6


def optimize_ramp(
    start: LaserPoint,
    end: LaserPoint,
    m_interior: int,
    epsilon: float,
    config: PlaquetteConfig,
    bounds: dict | None = None,
    budget: int = 100,
    seed: int = 0,
    sectors=DEFAULT_SECTORS,
    mode: str = "self_consistent",
    initial_indices: dict[int, int] | None = None,
    maxfun: int | None = None,
    t_start: float = 1e-3,
) -> tuple[AdiabaticPath, RampReport]:
    """Minimize T_eps over (q, interior waypoints) with seeded dual annealing.

    The search space has 2M+1 parameters. ``budget`` caps the annealing
    iterations (<= 100 by default); budget <= 1 evaluates the initial guess
    only. Candidates whose path crosses a level (gap collapse) score a large
    penalty; if every candidate is infeasible the optimization fails.
    """
    if budget > 100:
        raise InputError("budget is capped at 100 outer steps")
    if not (0 <= m_interior <= MAX_INTERIOR_POINTS):
        raise InputError(f"m_interior must be in 0..{MAX_INTERIOR_POINTS}")
    sectors = _sector_list(sectors)
    v = config.interaction
    box = {
        "q": (0.5, 1.0),
        "omega": (0.0, v),
        "delta": (-3.0 * v, 1.0 * v),
    }
    if bounds:
        box.update(bounds)

    def build(x) -> AdiabaticPath:
        q = float(x[0])
        interior = tuple(
            (float(x[1 + i]), float(x[1 + m_interior + i])) for i in range(m_interior)
        )
        base = spline_path(start, end, interior)
        tables = PathTables(base, config, sectors, initial_indices=initial_indices)
        theta = reparametrize(tables, q, mode=mode)
        return AdiabaticPath(base=base, theta=theta, duration=0.0, sectors=sectors)

    cache: dict[tuple, float] = {}

    def objective(x) -> float:
        key = tuple(np.round(np.asarray(x, float), 12))
        if key in cache:
            return cache[key]
        try:
            path = build(x)
            tf = time_functional(path, epsilon, config, sectors, t_start, initial_indices)
            val = tf.t_eps
        except (NumericalError, InfeasibleError):
            val = _PENALTY
        cache[key] = val
        return val

    x0 = np.empty(1 + 2 * m_interior)
    x0[0] = 0.75
    for i in range(m_interior):
        frac = (i + 1) / (m_interior + 1)
        x0[1 + i] = (1 - frac) * start.omega + frac * end.omega
        x0[1 + m_interior + i] = (1 - frac) * start.delta + frac * end.delta

    if budget <= 1:
        best_x = x0
    else:
        lw = [box["q"][0]] + [box["omega"][0]] * m_interior + [box["delta"][0]] * m_interior
        up = [box["q"][1]] + [box["omega"][1]] * m_interior + [box["delta"][1]] * m_interior
        res = dual_annealing(
            objective,
            bounds=list(zip(lw, up)),
            maxiter=budget,
            seed=seed,
            x0=np.clip(x0, lw, up),
            maxfun=maxfun if maxfun is not None else budget * 20,
            minimizer_kwargs={"method": "Nelder-Mead", "options": {"maxfev": 25, "xatol": 1e-3, "fatol": 1e-4}},
        )
        best_x = res.x if res.fun < _PENALTY else x0
        if objective(best_x) >= _PENALTY:
            raise InfeasibleError("no feasible path found: gap collapse everywhere")

    if objective(x0) < _PENALTY and budget > 1:
        # keep the better of initial guess and annealing result (monotone best-so-far)
        if objective(best_x) > objective(x0):
            best_x = x0
    path = build(best_x)
    return evaluate_ramp(path, epsilon, config, sectors, initial_indices, t_start)


def infidelity_curve(
    path: AdiabaticPath,
    durations,
    config: PlaquetteConfig,
    sectors=DEFAULT_SECTORS,
    initial_indices: dict[int, int] | None = None,
) -> list[tuple[float, dict[int, float]]]:
    """(T, per-sector infidelity) rows for duration-sweep CSV export."""
    rows = []
    for t in durations:
        fids = ramp_fidelity(path, float(t), config, sectors, initial_indices)
        rows.append((float(t), {n: 1.0 - f for n, f in fids.items()}))
    return rows


def save_path(path: AdiabaticPath, report: RampReport, fh_or_name, seed: int | None = None) -> None:
    """Serialize an optimized ramp with its report and provenance."""
    payload = {"path": path.to_dict(), "report": report.to_dict(), "seed": seed}
    if hasattr(fh_or_name, "write"):
        json.dump(payload, fh_or_name, indent=1)
    else:
        with open(fh_or_name, "w") as fh:
            json.dump(payload, fh, indent=1)


def load_path(fh_or_name) -> tuple[AdiabaticPath, dict]:
    if hasattr(fh_or_name, "read"):
        payload = json.load(fh_or_name)
    else:
        with open(fh_or_name) as fh:
            payload = json.load(fh)
    return AdiabaticPath.from_dict(payload["path"]), payload
