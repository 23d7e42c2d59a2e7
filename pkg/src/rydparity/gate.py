"""Two-pause programmable four-body phase gate.

The pulse runs (0, d_start) -> hold at (w_a, d_a) -> hold at (w_b, d_b) ->
(0, d_end) along three adiabatic ramps, and the whole schedule is applied
twice (once coupling the down states, once the up states). All laser-shape
quantities are one-time calibrated; programming a phase only changes the two
hold times, solved from a 2x2 linear system over winding numbers.

Phase bookkeeping uses one-pulse per-sector phases phi_n = -int E_n dt; the
two-pulse gate gives class phases phi_even_a = phi_0 + phi_4, phi_even_b =
2 phi_2, phi_odd = phi_1 + phi_3, and the gate of phase gamma is realized at
phase differences dphi_{a,b} = phi_even - phi_odd = -2 gamma (mod 2 pi).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .errors import InfeasibleError, InputError, NumericalError
from .plaquette import PlaquetteConfig, segment_propagator, _sector_ops
from .pulses import HoldSegment, LaserPoint, PiecewisePulse
from .ramps import (
    AdiabaticPath,
    PathTables,
    evaluate_ramp,
    make_adiabatic_path,
    optimize_ramp,
)

TWO_PI = 2.0 * np.pi
SECTORS = (1, 2, 3, 4)
DEFAULT_M_MAX = 8
DEFAULT_WORST_GRID = 64
PHASE_TABLE_NODES = 2049
_SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class ExperimentBox:
    """Laser-parameter limits: edge detunings in [-3V, 0), hold detunings in
    [-3V, V), Rabi frequencies in (0, omega_max]."""

    v: float
    omega_max: float

    def validate(self, w: "Waypoints") -> None:
        v = self.v
        for name, d in (("delta_start", w.delta_start), ("delta_end", w.delta_end)):
            if not (-3.0 * v <= d < 0.0):
                raise InputError(f"{name}={d} outside [-3V, 0)")
        for name, d in (("delta_a", w.delta_a), ("delta_b", w.delta_b)):
            if not (-3.0 * v <= d < 1.0 * v):
                raise InputError(f"{name}={d} outside [-3V, V)")
        for name, o in (("omega_a", w.omega_a), ("omega_b", w.omega_b)):
            if not (0.0 < o <= self.omega_max):
                raise InputError(f"{name}={o} outside (0, omega_max]")


@dataclass(frozen=True)
class Waypoints:
    """The six calibrated laser-parameter coordinates (rad/us)."""

    delta_start: float
    omega_a: float
    delta_a: float
    omega_b: float
    delta_b: float
    delta_end: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.delta_start, self.omega_a, self.delta_a, self.omega_b, self.delta_b, self.delta_end]
        )

    @classmethod
    def from_array(cls, x) -> "Waypoints":
        return cls(*(float(v) for v in x))


def default_waypoints(v: float) -> Waypoints:
    """Starting candidate: pause A low in the dressed branch past the
    anticrossing (strong per-sector energy splitting), pause B high and
    detuned for a well-conditioned 2x2 pause-energy matrix."""
    return Waypoints(
        delta_start=-1.5 * v,
        omega_a=0.25 * v,
        delta_a=0.4 * v,
        omega_b=0.8 * v,
        delta_b=0.6 * v,
        delta_end=-1.5 * v,
    )


@dataclass(frozen=True)
class PhaseTables:
    """One-pulse ramp phases and pause energies for fixed waypoints and ramps.

    ``ramp_phases[n]`` holds (phi_n over ramps 1, 3, 5); ``pause_energies``
    holds the tracked eigenenergy of each sector at the two hold points.
    Class combinations: dphi_a uses sectors {0,4} vs {1,3}; dphi_b uses
    {2,2} vs {1,3}.
    """

    ramp_phases: dict[int, tuple[float, float, float]]
    ramp_durations: tuple[float, float, float]
    pause_energies: dict[str, dict[int, float]]  # {"a": {n: E_n}, "b": ...} keyed "A"/"B"
    tracked_end_indices: dict[str, dict[int, int]]

    def dphi_ramps(self) -> tuple[float, float]:
        phi = {n: sum(self.ramp_phases[n]) for n in range(5)}
        dphi_a = (phi[0] + phi[4]) - (phi[1] + phi[3])
        dphi_b = 2.0 * phi[2] - (phi[1] + phi[3])
        return dphi_a, dphi_b

    def delta_e(self) -> np.ndarray:
        """2x2 matrix [[dE_a^A, dE_a^B], [dE_b^A, dE_b^B]], dE_j = E_odd - E_even^j."""
        out = np.zeros((2, 2))
        for col, point in enumerate(("A", "B")):
            e = self.pause_energies[point]
            e_odd = e[1] + e[3]
            out[0, col] = e_odd - (e[0] + e[4])
            out[1, col] = e_odd - 2.0 * e[2]
        return out

    def to_dict(self) -> dict:
        return {
            "ramp_phases": {str(n): list(v) for n, v in self.ramp_phases.items()},
            "ramp_durations": list(self.ramp_durations),
            "pause_energies": {
                p: {str(n): e for n, e in d.items()} for p, d in self.pause_energies.items()
            },
            "tracked_end_indices": {
                p: {str(n): i for n, i in d.items()} for p, d in self.tracked_end_indices.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseTables":
        return cls(
            ramp_phases={int(n): tuple(v) for n, v in d["ramp_phases"].items()},
            ramp_durations=tuple(d["ramp_durations"]),
            pause_energies={
                p: {int(n): float(e) for n, e in dd.items()} for p, dd in d["pause_energies"].items()
            },
            tracked_end_indices={
                p: {int(n): int(i) for n, i in dd.items()} for p, dd in d["tracked_end_indices"].items()
            },
        )


def _simpson_uniform(y: np.ndarray, length: float) -> float:
    n = len(y) - 1
    h = length / n
    return float(h / 3.0 * (y[0] + y[-1] + 4 * np.sum(y[1:-1:2]) + 2 * np.sum(y[2:-1:2])))


def tracked_ramp_energies(
    ramps,
    config: PlaquetteConfig,
    n: int,
    nodes: int,
) -> list[tuple[np.ndarray, np.ndarray, int]]:
    """Per ramp: (s grid, tracked E_n(theta(s)), tracked index at the ramp end).

    Diagonalizes the sector Hamiltonian directly at the modified-path points
    (no interpolation) and chains eigenvector continuity across the ramps.
    """
    ops = _sector_ops(n, config)
    out = []
    vec = None
    for ramp in ramps:
        s = np.linspace(0.0, 1.0, nodes)
        om, de = ramp(s)
        hams = (
            ops.c_diag[None, :, :]
            + np.asarray(om, float)[:, None, None] * ops.a_omega[None, :, :]
            + np.asarray(de, float)[:, None, None] * ops.b_delta[None, :, :]
        )
        w, v = np.linalg.eigh(hams)
        if vec is None:
            idx = int(np.argmin(np.abs(w[0])))  # k=0 state at omega=0
            vec = v[0][:, idx]
        energies = np.empty(nodes)
        last_idx = 0
        for i in range(nodes):
            ov = np.abs(v[i].conj().T @ vec) ** 2
            last_idx = int(np.argmax(ov))
            vec = v[i][:, last_idx]
            energies[i] = w[i, last_idx]
        out.append((s, energies, last_idx))
    return out


def compute_phase_tables(
    ramps: tuple[AdiabaticPath, AdiabaticPath, AdiabaticPath],
    config: PlaquetteConfig,
    nodes: int = PHASE_TABLE_NODES,
) -> PhaseTables:
    """Integrate tracked eigenenergies over the three ramps and read pause energies.

    phi_n over a ramp of duration T is -T int_0^1 E_n(theta(s)) ds (Simpson on
    ``nodes`` fresh diagonalization points). The n=0 sector has E=0
    throughout. Pause energies are the tracked eigenvalues at the ends of
    ramps 1 and 2.
    """
    if nodes % 2 == 0:
        nodes += 1
    ramp_phases: dict[int, tuple[float, float, float]] = {0: (0.0, 0.0, 0.0)}
    pause = {"A": {0: 0.0}, "B": {0: 0.0}}
    tracked = {"A": {0: 0}, "B": {0: 0}}
    for n in SECTORS:
        per_ramp = tracked_ramp_energies(ramps, config, n, nodes)
        ramp_phases[n] = tuple(
            -ramp.duration * _simpson_uniform(energies, 1.0)
            for ramp, (_, energies, _) in zip(ramps, per_ramp)
        )
        pause["A"][n] = float(per_ramp[0][1][-1])
        pause["B"][n] = float(per_ramp[1][1][-1])
        tracked["A"][n] = per_ramp[0][2]
        tracked["B"][n] = per_ramp[1][2]
    return PhaseTables(
        ramp_phases=ramp_phases,
        ramp_durations=tuple(r.duration for r in ramps),
        pause_energies=pause,
        tracked_end_indices=tracked,
    )


@dataclass(frozen=True)
class HoldSolution:
    t_a: float
    t_b: float
    m_a: int
    m_b: int

    @property
    def total(self) -> float:
        return self.t_a + self.t_b


def solve_hold_times(
    dphi_a: float,
    dphi_b: float,
    tables: PhaseTables,
    m_max: int = DEFAULT_M_MAX,
) -> HoldSolution:
    """Shortest nonnegative hold times realizing the target phase differences.

    Solves dE . t = (dphi - dphi_ramps mod 2pi) + 2 pi m over all winding
    pairs m in [-m_max, m_max]^2 and returns the feasible solution with
    minimal t_a + t_b.
    """
    de = tables.delta_e()
    det = float(np.linalg.det(de))
    if abs(det) < _SINGULAR_TOL * max(1.0, float(np.max(np.abs(de))) ** 2):
        raise InfeasibleError("pause-energy matrix is singular; holds cannot program both phases")
    ra, rb = tables.dphi_ramps()
    base = np.array([(dphi_a - ra) % TWO_PI, (dphi_b - rb) % TWO_PI])
    inv = np.linalg.inv(de)
    ms = np.arange(-m_max, m_max + 1)
    ma, mb = np.meshgrid(ms, ms, indexing="ij")
    rhs = base[None, None, :] + TWO_PI * np.stack([ma, mb], axis=-1)
    ts = rhs @ inv.T
    feasible = np.all(ts >= -1e-12, axis=-1)
    if not np.any(feasible):
        raise InfeasibleError(
            f"no nonnegative hold times within winding bound m_max={m_max}; try a larger bound"
        )
    totals = np.where(feasible, ts[..., 0] + ts[..., 1], np.inf)
    i, j = np.unravel_index(int(np.argmin(totals)), totals.shape)
    t_a, t_b = float(max(ts[i, j, 0], 0.0)), float(max(ts[i, j, 1], 0.0))
    return HoldSolution(t_a=t_a, t_b=t_b, m_a=int(ms[i]), m_b=int(ms[j]))


def _solve_grid(base_a, base_b, inv, m_max):
    """Vectorized minimal total hold over targets; inf where infeasible."""
    ms = np.arange(-m_max, m_max + 1)
    ma, mb = np.meshgrid(ms, ms, indexing="ij")
    wind = TWO_PI * np.stack([ma.ravel(), mb.ravel()], axis=-1)  # (W, 2)
    rhs = np.stack([base_a, base_b], axis=-1)[..., None, :] + wind  # (..., W, 2)
    ts = rhs @ inv.T
    feas = np.all(ts >= -1e-12, axis=-1)
    totals = np.where(feas, ts.sum(axis=-1), np.inf)
    return np.min(totals, axis=-1)


def worst_case_hold(
    tables: PhaseTables,
    grid: int = DEFAULT_WORST_GRID,
    m_max: int = DEFAULT_M_MAX,
) -> float:
    """Max over programmed phase targets of the minimal total hold time.

    Scans a grid x grid lattice over [0, 2pi)^2 and refines once at a quarter
    of the grid step around the maximum. Any infeasible target makes the
    waypoint set infeasible.
    """
    if grid < 16:
        raise InputError("worst-case grid must be >= 16")
    de = tables.delta_e()
    det = float(np.linalg.det(de))
    if abs(det) < _SINGULAR_TOL * max(1.0, float(np.max(np.abs(de))) ** 2):
        raise InfeasibleError("pause-energy matrix is singular")
    inv = np.linalg.inv(de)
    ra, rb = tables.dphi_ramps()
    targets = np.linspace(0.0, TWO_PI, grid, endpoint=False)
    ta, tb = np.meshgrid(targets, targets, indexing="ij")
    base_a = (ta - ra) % TWO_PI
    base_b = (tb - rb) % TWO_PI
    totals = _solve_grid(base_a, base_b, inv, m_max)
    if not np.all(np.isfinite(totals)):
        raise InfeasibleError("infeasible phase target on the worst-case grid")
    i, j = np.unravel_index(int(np.argmax(totals)), totals.shape)
    best = float(totals[i, j])
    step = TWO_PI / grid
    fine = np.arange(-4, 5) * (step / 4.0)
    fa, fb = np.meshgrid(targets[i] + fine, targets[j] + fine, indexing="ij")
    base_a = (fa - ra) % TWO_PI
    base_b = (fb - rb) % TWO_PI
    totals_fine = _solve_grid(base_a, base_b, inv, m_max)
    if not np.all(np.isfinite(totals_fine)):
        raise InfeasibleError("infeasible phase target in the refinement pass")
    return max(best, float(np.max(totals_fine)))


@dataclass(frozen=True)
class GateCalibration:
    """One-time gate calibration: waypoints, sized ramps, and phase tables."""

    waypoints: Waypoints
    ramps: tuple[AdiabaticPath, AdiabaticPath, AdiabaticPath]
    tables: PhaseTables
    interaction: float
    epsilon: float
    t_hold_worst: float
    m_max: int = DEFAULT_M_MAX
    seed: int | None = None
    ramp_reports: tuple | None = None

    @property
    def t_ramps(self) -> float:
        return float(sum(self.tables.ramp_durations))

    @property
    def t_gate_worst(self) -> float:
        return 2.0 * (self.t_ramps + self.t_hold_worst)

    def config(self) -> PlaquetteConfig:
        return PlaquetteConfig(interaction=self.interaction)

    def hold_points(self) -> tuple[LaserPoint, LaserPoint]:
        w = self.waypoints
        return LaserPoint(w.omega_a, w.delta_a), LaserPoint(w.omega_b, w.delta_b)

    def to_dict(self) -> dict:
        return {
            "waypoints": list(self.waypoints.as_array()),
            "ramps": [r.to_dict() for r in self.ramps],
            "tables": self.tables.to_dict(),
            "interaction": self.interaction,
            "epsilon": self.epsilon,
            "t_hold_worst": self.t_hold_worst,
            "t_gate_worst": self.t_gate_worst,
            "m_max": self.m_max,
            "seed": self.seed,
            "ramp_reports": [r.to_dict() for r in self.ramp_reports] if self.ramp_reports else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GateCalibration":
        return cls(
            waypoints=Waypoints.from_array(d["waypoints"]),
            ramps=tuple(AdiabaticPath.from_dict(r) for r in d["ramps"]),
            tables=PhaseTables.from_dict(d["tables"]),
            interaction=float(d["interaction"]),
            epsilon=float(d["epsilon"]),
            t_hold_worst=float(d["t_hold_worst"]),
            m_max=int(d["m_max"]),
            seed=d.get("seed"),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "GateCalibration":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(d)


def pulse_for_targets(calibration: GateCalibration, dphi_a: float, dphi_b: float) -> tuple[PiecewisePulse, HoldSolution]:
    """Assemble the five-segment pulse programming the given phase differences."""
    sol = solve_hold_times(dphi_a, dphi_b, calibration.tables, calibration.m_max)
    a, b = calibration.hold_points()
    r1, r2, r3 = calibration.ramps
    pulse = PiecewisePulse(
        segments=(
            r1.as_segment(),
            HoldSegment(a, sol.t_a),
            r2.as_segment(),
            HoldSegment(b, sol.t_b),
            r3.as_segment(),
        )
    )
    return pulse, sol


def gate_for_gamma(calibration: GateCalibration, gamma: float) -> tuple[PiecewisePulse, HoldSolution]:
    """Pulse realizing the four-body gate of phase gamma (dphi_{a,b} = -2 gamma)."""
    target = (-2.0 * gamma) % TWO_PI
    return pulse_for_targets(calibration, target, target)


class CompiledCoherentGate:
    """Cached per-sector ramp propagators; only hold phases vary per pulse.

    Amplitudes a_z for hold times (t_a, t_b) then cost two 5x5 exponentials
    per sector, which makes large phase-sample sweeps cheap.
    """

    def __init__(self, calibration: GateCalibration, step_scale: int = 2):
        config = calibration.config()
        a, b = calibration.hold_points()
        self._hold_eigs = {}
        self._ramp_us = {}
        for n in range(5):
            ops = _sector_ops(n, config)
            us = [
                segment_propagator(r.as_segment(), n, config, step_scale=step_scale)
                for r in calibration.ramps
            ]
            self._ramp_us[n] = us
            self._hold_eigs[n] = []
            for point in (a, b):
                h = ops.c_diag + point.omega * ops.a_omega + point.delta * ops.b_delta
                self._hold_eigs[n].append(np.linalg.eigh(h))

    def sector_amplitude(self, n: int, t_a: float, t_b: float) -> complex:
        u1, u2, u3 = self._ramp_us[n]
        (wa, va), (wb, vb) = self._hold_eigs[n]
        ua = (va * np.exp(-1j * wa * t_a)[None, :]) @ va.conj().T
        ub = (vb * np.exp(-1j * wb * t_b)[None, :]) @ vb.conj().T
        u = u3 @ ub @ u2 @ ua @ u1
        return complex(u[0, 0])

    def amplitudes(self, t_a: float, t_b: float) -> np.ndarray:
        amp = np.array([self.sector_amplitude(n, t_a, t_b) for n in range(5)])
        a = np.empty(16, dtype=complex)
        for z in range(16):
            n = bin(z).count("1")
            a[z] = amp[n] * amp[4 - n]
        return a


def class_target_phases(dphi_a: float, dphi_b: float) -> np.ndarray:
    """Ideal diagonal for arbitrary class-phase targets (odd class as reference)."""
    u = np.empty(16, dtype=complex)
    for z in range(16):
        n = bin(z).count("1")
        if n % 2 == 1:
            u[z] = 1.0
        elif n == 2:
            u[z] = np.exp(1j * dphi_b)
        else:
            u[z] = np.exp(1j * dphi_a)
    return u


def coherent_fidelity_for_targets(amplitudes, dphi_a: float, dphi_b: float) -> float:
    u = class_target_phases(dphi_a, dphi_b)
    tr = np.sum(np.conj(u) * np.asarray(amplitudes, dtype=complex))
    return float((16 + np.abs(tr) ** 2) / (16 * 17))


def build_calibration(
    waypoints: Waypoints,
    config: PlaquetteConfig,
    epsilon: float,
    omega_max: float | None = None,
    m_interior: int = 0,
    ramp_budget: int = 1,
    seed: int = 0,
    m_max: int = DEFAULT_M_MAX,
    worst_grid: int = DEFAULT_WORST_GRID,
    ramp_maxfun: int | None = None,
    q_default: float = 0.75,
) -> GateCalibration:
    """Size and assemble a calibration for fixed waypoints.

    Each of the three ramps is made eps-adiabatic via the time functional
    (optimized over q and interior points when ramp_budget > 1), tracking is
    chained through the waypoint sequence, and the worst-case hold time is
    evaluated on the target grid.
    """
    box = ExperimentBox(v=config.interaction, omega_max=omega_max or config.interaction)
    box.validate(waypoints)
    w = waypoints
    legs = (
        (LaserPoint(0.0, w.delta_start), LaserPoint(w.omega_a, w.delta_a)),
        (LaserPoint(w.omega_a, w.delta_a), LaserPoint(w.omega_b, w.delta_b)),
        (LaserPoint(w.omega_b, w.delta_b), LaserPoint(0.0, w.delta_end)),
    )
    ramps = []
    reports = []
    indices: dict[int, int] | None = None
    for leg_i, (p0, p1) in enumerate(legs):
        if ramp_budget > 1:
            path, report = optimize_ramp(
                p0,
                p1,
                m_interior,
                epsilon,
                config,
                budget=ramp_budget,
                seed=seed + leg_i,
                sectors=SECTORS,
                initial_indices=indices,
                maxfun=ramp_maxfun,
            )
        else:
            path = make_adiabatic_path(
                p0, p1, q=q_default, config=config, sectors=SECTORS, initial_indices=indices
            )
            path, report = evaluate_ramp(path, epsilon, config, SECTORS, indices)
        ramps.append(path)
        reports.append(report)
        tables = PathTables(path.base, config, SECTORS, initial_indices=indices)
        indices = tables.end_indices()

    ramps = tuple(ramps)
    tables = compute_phase_tables(ramps, config)
    t_hold = worst_case_hold(tables, grid=worst_grid, m_max=m_max)
    return GateCalibration(
        waypoints=waypoints,
        ramps=ramps,
        tables=tables,
        interaction=config.interaction,
        epsilon=epsilon,
        t_hold_worst=t_hold,
        m_max=m_max,
        seed=seed,
        ramp_reports=tuple(reports),
    )


def _final_tracked_vector(ramps, config: PlaquetteConfig, n: int, nodes: int = 801) -> np.ndarray:
    ops = _sector_ops(n, config)
    vec = None
    for ramp in ramps:
        s = np.linspace(0.0, 1.0, nodes)
        om, de = ramp(s)
        hams = (
            ops.c_diag[None, :, :]
            + np.asarray(om, float)[:, None, None] * ops.a_omega[None, :, :]
            + np.asarray(de, float)[:, None, None] * ops.b_delta[None, :, :]
        )
        w, v = np.linalg.eigh(hams)
        if vec is None:
            vec = v[0][:, int(np.argmin(np.abs(w[0])))]
        for i in range(nodes):
            ov = np.abs(v[i].conj().T @ vec) ** 2
            vec = v[i][:, int(np.argmax(ov))]
    return vec


def check_return_to_basis(calibration: GateCalibration, tol: float = 0.05) -> float:
    """Overlap^2 of the tracked state with |k=0> at the end of the pulse.

    Raises if any sector fails to come back, which would leak the gate out of
    the computational basis.
    """
    config = calibration.config()
    worst = 1.0
    for n in SECTORS:
        vec = _final_tracked_vector(calibration.ramps, config, n)
        worst = min(worst, float(np.abs(vec[0]) ** 2))
    if worst < 1.0 - tol:
        raise InfeasibleError(
            f"pulse does not return to the computational basis (overlap^2 {worst:.3f})"
        )
    return worst


def optimize_waypoints(
    config: PlaquetteConfig,
    epsilon: float,
    omega_max: float | None = None,
    budget: int = 100,
    seed: int = 0,
    initial: Waypoints | None = None,
    m_interior: int = 0,
    ramp_budget: int = 1,
    m_max: int = DEFAULT_M_MAX,
    worst_grid: int = DEFAULT_WORST_GRID,
    local_maxfev: int = 6,
    perturbation_frac: float = 0.1,
    temperature_frac: float = 0.1,
) -> GateCalibration:
    """Basin-hopping search for waypoints minimizing the worst-case gate time.

    Each candidate evaluation rebuilds the three eps-adiabatic ramps and the
    phase tables (one-time calibration cost); hops perturb the six waypoint
    coordinates by 10% of the box width, descend with a bounded Nelder-Mead,
    and accept by Metropolis at a fixed temperature (10% of the initial
    objective). Deterministic for a given seed; budget <= 1 evaluates only
    the initial candidate.
    """
    v = config.interaction
    omega_max = omega_max or v
    eps_o = 1e-3 * omega_max
    lo = np.array([-3.0 * v, eps_o, -3.0 * v, eps_o, -3.0 * v, -3.0 * v])
    hi = np.array([-1e-3 * v, omega_max, v * (1 - 1e-9), omega_max, v * (1 - 1e-9), -1e-3 * v])
    if initial is None:
        initial = default_waypoints(v)
    rng = np.random.default_rng(seed)
    cache: dict[tuple, float] = {}
    _PENALTY = 1e6

    def objective(x) -> float:
        key = tuple(np.round(x, 9))
        if key in cache:
            return cache[key]
        try:
            w = Waypoints.from_array(np.clip(x, lo, hi))
            cal = build_calibration(
                w,
                config,
                epsilon,
                omega_max=omega_max,
                m_interior=m_interior,
                ramp_budget=ramp_budget,
                seed=seed,
                m_max=m_max,
                worst_grid=worst_grid,
            )
            check_return_to_basis(cal)
            val = cal.t_gate_worst
        except (InfeasibleError, NumericalError, InputError):
            val = _PENALTY
        cache[key] = val
        return val

    x = initial.as_array()
    f = objective(x)
    best_x, best_f = x.copy(), f
    if budget > 1:
        if f >= _PENALTY:
            raise InfeasibleError("initial waypoint candidate is infeasible")
        temp = temperature_frac * f
        width = perturbation_frac * (hi - lo)
        for _ in range(budget - 1):
            prop = np.clip(x + rng.normal(size=6) * width, lo, hi)
            res = minimize(
                objective,
                prop,
                method="Nelder-Mead",
                options={"maxfev": local_maxfev, "xatol": 1e-3 * v, "fatol": 1e-3},
            )
            fx = float(res.fun)
            if fx < f or rng.uniform() < np.exp(-(fx - f) / max(temp, 1e-12)):
                x, f = np.clip(res.x, lo, hi), fx
            if fx < best_f:
                best_x, best_f = np.clip(res.x, lo, hi), fx
    if best_f >= _PENALTY:
        raise InfeasibleError("all waypoint candidates were infeasible")
    w = Waypoints.from_array(best_x)
    cal = build_calibration(
        w,
        config,
        epsilon,
        omega_max=omega_max,
        m_interior=m_interior,
        ramp_budget=ramp_budget,
        seed=seed,
        m_max=m_max,
        worst_grid=worst_grid,
    )
    check_return_to_basis(cal)
    return cal


@dataclass
class ErrorCurvePoint:
    label: str
    t_gate_mean: float
    mean_error: float
    n_samples: int
    decay_rate: float


def error_curve(
    calibrations,
    samples: int,
    seed: int = 0,
    decay=None,
    gamma_only: bool = False,
    channel_step_norm: float | None = None,
) -> list[ErrorCurvePoint]:
    """Mean gate error per calibration over random phase targets.

    Each sample draws a target pair (dphi_a, dphi_b) uniformly from
    [0, 2pi)^2 (or a single gamma with dphi = -2 gamma when ``gamma_only``),
    solves the hold times, and scores the realized channel against the ideal
    diagonal. Coherent when ``decay`` is None; otherwise the dissipative
    channel from the symmetric-subspace engine.
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    from .opensystem import average_fidelity_to_diagonal
    from .symchannel import RAMP_STEP_NORM, gate_channel_symmetric

    out = []
    for li, (label, cal) in enumerate(calibrations):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(li,)))
        if gamma_only:
            gammas = rng.uniform(0.0, TWO_PI, size=samples)
            targets = np.stack([(-2.0 * gammas) % TWO_PI, (-2.0 * gammas) % TWO_PI], axis=1)
        else:
            targets = rng.uniform(0.0, TWO_PI, size=(samples, 2))
        config = cal.config()
        compiled = None if decay is not None else CompiledCoherentGate(cal)
        errs = np.empty(samples)
        durations = np.empty(samples)
        for si, (ta, tb) in enumerate(targets):
            if decay is None:
                sol = solve_hold_times(ta, tb, cal.tables, cal.m_max)
                amps = compiled.amplitudes(sol.t_a, sol.t_b)
                fid = coherent_fidelity_for_targets(amps, ta, tb)
                total = sol.total
            else:
                pulse, sol = pulse_for_targets(cal, ta, tb)
                ch = gate_channel_symmetric(
                    pulse,
                    pulse,
                    config,
                    decay,
                    step_norm=channel_step_norm if channel_step_norm else RAMP_STEP_NORM,
                )
                fid = average_fidelity_to_diagonal(ch, class_target_phases(ta, tb))
                total = sol.total
            errs[si] = 1.0 - fid
            durations[si] = 2.0 * (cal.t_ramps + total)
        out.append(
            ErrorCurvePoint(
                label=str(label),
                t_gate_mean=float(np.mean(durations)),
                mean_error=float(np.mean(errs)),
                n_samples=samples,
                decay_rate=0.0 if decay is None else decay.gamma_r,
            )
        )
    return out


def scale_ramp_durations(calibration: GateCalibration, factor: float) -> GateCalibration:
    """Same waypoints and paths with all three ramp durations scaled.

    Pause energies are unchanged; ramp phases scale linearly with duration,
    so the tables are rebuilt cheaply from the stored per-sector phases.
    """
    ramps = tuple(
        AdiabaticPath(base=r.base, theta=r.theta, duration=r.duration * factor, sectors=r.sectors)
        for r in calibration.ramps
    )
    old = calibration.tables
    tables = PhaseTables(
        ramp_phases={n: tuple(p * factor for p in v) for n, v in old.ramp_phases.items()},
        ramp_durations=tuple(d * factor for d in old.ramp_durations),
        pause_energies=old.pause_energies,
        tracked_end_indices=old.tracked_end_indices,
    )
    t_hold = worst_case_hold(tables, m_max=calibration.m_max)
    return replace(calibration, ramps=ramps, tables=tables, t_hold_worst=t_hold)
