"""Laser-driven 2x2 plaquette dynamics, one excitation sector at a time.

During a pulse only atoms whose ground state is laser-coupled take part; a
basis state with n coupled atoms evolves inside the (n+1)-dimensional
symmetric (Dicke) subspace spanned by |k> = "k atoms in the Rydberg state".
In that basis

    H_n(omega, delta) = diag(-k delta + k(k-1) V / 2)
                        + (omega/2) sqrt((n-k)(k+1)) |k+1><k| + h.c.

Propagation uses a fixed-step fourth-order commutator (Magnus) scheme built
from batched 5x5 eigendecompositions, with the step bound h * max||H|| <=
0.05 and a Richardson check at h/2. Phase convention: a state tracked on
eigenenergy E(t) accrues exp(-i int E dt).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError, TrackingError
from .pulses import HoldSegment, LaserPoint, PiecewisePulse, RampSegment

STEP_NORM_BOUND = 0.05  # h * max||H|| per integration step
MIN_TRACK_SAMPLES = 400  # per ramp segment
PLAQUETTE_SIZE = 4


@dataclass(frozen=True)
class PlaquetteConfig:
    """Equal pairwise Rydberg interaction V (rad/us) on an L=4 plaquette."""

    interaction: float
    size: int = PLAQUETTE_SIZE

    def __post_init__(self):
        if self.interaction <= 0:
            raise InputError("interaction V must be > 0")
        if self.size != PLAQUETTE_SIZE:
            raise InputError("only L=4 plaquettes are supported")


@dataclass(frozen=True)
class SectorHamiltonian:
    n: int
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.n + 1


def _check_sector(n: int) -> None:
    if not (0 <= n <= PLAQUETTE_SIZE):
        raise InputError(f"sector n={n} out of range 0..{PLAQUETTE_SIZE}")


def coupling_generator(n: int) -> np.ndarray:
    """dH/d(omega): symmetric ladder coupling, (1/2) sqrt((n-k)(k+1)) offdiagonals."""
    _check_sector(n)
    a = np.zeros((n + 1, n + 1))
    for k in range(n):
        a[k + 1, k] = 0.5 * np.sqrt((n - k) * (k + 1))
        a[k, k + 1] = a[k + 1, k]
    return a


def detuning_generator(n: int) -> np.ndarray:
    """dH/d(delta): -k on the diagonal."""
    _check_sector(n)
    return np.diag(-np.arange(n + 1, dtype=float))


def interaction_diag(n: int, config: PlaquetteConfig) -> np.ndarray:
    """Rydberg pair energies k(k-1)V/2 on the diagonal."""
    _check_sector(n)
    k = np.arange(n + 1, dtype=float)
    return np.diag(k * (k - 1) * config.interaction / 2.0)


def sector_hamiltonian(n: int, point: LaserPoint, config: PlaquetteConfig) -> SectorHamiltonian:
    """H_n at a single laser point."""
    h = interaction_diag(n, config) + point.omega * coupling_generator(n) + point.delta * detuning_generator(n)
    return SectorHamiltonian(n=n, matrix=h)


def sector_spectrum(n: int, point: LaserPoint, config: PlaquetteConfig) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and column-matched orthonormal eigenvectors."""
    return np.linalg.eigh(sector_hamiltonian(n, point, config).matrix)


@dataclass(frozen=True)
class _SectorOperators:
    """Cached generator matrices and spectral-norm bound pieces for one sector."""

    n: int
    c_diag: np.ndarray
    a_omega: np.ndarray
    b_delta: np.ndarray
    comm_ca: np.ndarray
    comm_ab: np.ndarray
    norm_c: float
    norm_a: float
    norm_b: float


def _sector_ops(n: int, config: PlaquetteConfig) -> _SectorOperators:
    c = interaction_diag(n, config)
    a = coupling_generator(n)
    b = detuning_generator(n)
    return _SectorOperators(
        n=n,
        c_diag=c,
        a_omega=a,
        b_delta=b,
        comm_ca=c @ a - a @ c,
        comm_ab=a @ b - b @ a,
        norm_c=float(np.linalg.norm(c, 2)),
        norm_a=float(np.linalg.norm(a, 2)),
        norm_b=float(np.linalg.norm(b, 2)),
    )


def _batched_hamiltonians(ops: _SectorOperators, omegas: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    return (
        ops.c_diag[None, :, :]
        + omegas[:, None, None] * ops.a_omega[None, :, :]
        + deltas[:, None, None] * ops.b_delta[None, :, :]
    )


def _batched_expm_antihermitian(gen: np.ndarray) -> np.ndarray:
    """exp(gen) for a stack of anti-Hermitian generators, via eigh of i*gen."""
    herm = 1j * gen
    w, v = np.linalg.eigh(herm)
    phases = np.exp(-1j * w)
    return np.einsum("sij,sj,skj->sik", v, phases, v.conj(), optimize=True)


def _ordered_product(mats: np.ndarray) -> np.ndarray:
    """Time-ordered product U_{S-1} ... U_1 U_0 by pairwise log-reduction."""
    while mats.shape[0] > 1:
        m = mats.shape[0]
        even = mats[0 : m - (m % 2) : 2]
        odd = mats[1 : m - (m % 2) + 1 : 2]
        head = np.matmul(odd, even)
        if m % 2:
            mats = np.concatenate([head, mats[-1:]], axis=0)
        else:
            mats = head
    return mats[0]


_GAUSS_OFFSETS = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


def _magnus_segment(
    ops: _SectorOperators,
    omega_of_s,
    delta_of_s,
    duration: float,
    steps: int,
) -> np.ndarray:
    """Fourth-order Magnus propagator for one time-dependent segment."""
    h = duration / steps
    edges = np.arange(steps, dtype=float) * h
    s1 = (edges + _GAUSS_OFFSETS[0] * h) / duration
    s2 = (edges + _GAUSS_OFFSETS[1] * h) / duration
    om1, de1 = np.asarray(omega_of_s(s1), dtype=float), np.asarray(delta_of_s(s1), dtype=float)
    om2, de2 = np.asarray(omega_of_s(s2), dtype=float), np.asarray(delta_of_s(s2), dtype=float)

    # Omega = -i h * (H1 + H2)/2 - (sqrt(3) h^2 / 12) [H2, H1], with
    # [H2, H1] = (om1 - om2)[C, A] + (om2*de1 - om1*de2)[A, B].
    h_avg = _batched_hamiltonians(ops, (om1 + om2) / 2.0, (de1 + de2) / 2.0)
    comm = (om1 - om2)[:, None, None] * ops.comm_ca[None, :, :] + (
        om2 * de1 - om1 * de2
    )[:, None, None] * ops.comm_ab[None, :, :]
    gen = -1j * h * h_avg - (np.sqrt(3.0) * h * h / 12.0) * comm
    return _ordered_product(_batched_expm_antihermitian(gen))


def _hold_propagator(ops: _SectorOperators, point: LaserPoint, duration: float) -> np.ndarray:
    h = ops.c_diag + point.omega * ops.a_omega + point.delta * ops.b_delta
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * duration)[None, :]) @ v.conj().T


def _segment_norm_bound(ops: _SectorOperators, seg) -> float:
    if isinstance(seg, HoldSegment):
        om, de = seg.point.omega, abs(seg.point.delta)
    else:
        s = np.linspace(0.0, 1.0, 64)
        om_arr, de_arr = seg.path(s)
        om = float(np.max(np.abs(om_arr)))
        de = float(np.max(np.abs(de_arr)))
    return ops.norm_c + om * ops.norm_a + de * ops.norm_b


def _segment_steps(ops: _SectorOperators, seg) -> int:
    bound = _segment_norm_bound(ops, seg)
    if seg.duration == 0:
        return 1
    steps = int(np.ceil(seg.duration * bound / STEP_NORM_BOUND))
    if steps > 50_000_000:
        raise NumericalError("step-size underflow: segment requires too many steps")
    return max(steps, 8)


@dataclass(frozen=True)
class EvolveResult:
    propagator: np.ndarray
    metadata: dict = field(default_factory=dict)


def _one_segment_propagator(ops: _SectorOperators, seg, step_scale: int = 1) -> np.ndarray:
    if seg.duration == 0:
        return np.eye(ops.n + 1, dtype=complex)
    if isinstance(seg, HoldSegment):
        return _hold_propagator(ops, seg.point, seg.duration)
    steps = _segment_steps(ops, seg) * step_scale

    def om_fn(s, seg=seg):
        return seg.path(s)[0]

    def de_fn(s, seg=seg):
        return seg.path(s)[1]

    return _magnus_segment(ops, om_fn, de_fn, seg.duration, steps)


def segment_propagator(segment, n: int, config: PlaquetteConfig, step_scale: int = 1) -> np.ndarray:
    """Propagator of a single ramp or hold segment (no pulse-level invariants)."""
    _check_sector(n)
    ops = _sector_ops(n, config)
    return _one_segment_propagator(ops, segment, step_scale)


def _pulse_propagator(pulse: PiecewisePulse, n: int, config: PlaquetteConfig, step_scale: int = 1) -> np.ndarray:
    ops = _sector_ops(n, config)
    u = np.eye(n + 1, dtype=complex)
    for seg in pulse.segments:
        u = _one_segment_propagator(ops, seg, step_scale) @ u
    return u


def evolve_sector(
    pulse: PiecewisePulse,
    n: int,
    config: PlaquetteConfig,
    tolerance: float = 1e-9,
    richardson: bool = True,
) -> EvolveResult:
    """Time-ordered propagator of sector n over a pulse.

    Holds are exponentiated exactly; ramps use the Magnus scheme with the
    fixed step bound. With ``richardson`` the ramp integration is repeated at
    half step and the halved-step result is returned together with the
    difference as an error estimate.
    """
    _check_sector(n)
    if tolerance <= 0:
        raise InputError("tolerance must be > 0")
    u1 = _pulse_propagator(pulse, n, config)
    rich_err = 0.0
    if richardson:
        u2 = _pulse_propagator(pulse, n, config, step_scale=2)
        rich_err = float(np.linalg.norm(u2 - u1, 2))
        u1 = u2
    defect = float(np.linalg.norm(u1.conj().T @ u1 - np.eye(n + 1), 2))
    if defect > tolerance:
        raise NumericalError(f"propagator unitarity defect {defect:.2e} exceeds tolerance")
    meta = {
        "sector": n,
        "step_norm_bound": STEP_NORM_BOUND,
        "richardson_error": rich_err,
        "unitarity_defect": defect,
    }
    return EvolveResult(propagator=u1, metadata=meta)


@dataclass(frozen=True)
class TrackedTrajectory:
    """Eigenstate followed by overlap continuity along a pulse."""

    times: np.ndarray
    indices: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray  # (samples, dim), tracked eigenvector at each sample

    @property
    def final_vector(self) -> np.ndarray:
        return self.vectors[-1]

    def phase(self) -> float:
        """Dynamical phase -int E dt over the trajectory (trapezoid)."""
        return -float(np.trapezoid(self.energies, self.times))


_DEGENERACY_TOL = 1e-9
_AMBIGUITY_TOL = 0.5
_REFINE_TOL = 0.9
_MAX_REFINES = 4


def _initial_index(n: int, point: LaserPoint, config: PlaquetteConfig) -> int:
    """Index (in ascending eigenvalue order) of the k=0 state at omega=0."""
    k = np.arange(n + 1, dtype=float)
    levels = -k * point.delta + k * (k - 1) * config.interaction / 2.0
    order = np.argsort(levels, kind="stable")
    pos = int(np.where(order == 0)[0][0])
    gaps = np.abs(np.delete(levels, 0) - levels[0])
    if n >= 1 and float(np.min(gaps)) < _DEGENERACY_TOL * max(1.0, config.interaction):
        raise TrackingError(
            f"degenerate start: omega=0 level crossing at delta={point.delta}"
        )
    return pos


def track_eigenstate(
    pulse: PiecewisePulse,
    n: int,
    config: PlaquetteConfig,
    samples: int | None = None,
) -> TrackedTrajectory:
    """Follow the eigenstate connected to |k=0> at the start of the pulse.

    Starts at the eigenstate of maximal overlap with the k=0 product state
    (exact at omega=0) and continues by maximal-overlap continuity. Sampling
    is refined (doubled) while any consecutive overlap^2 falls below 0.9;
    below 0.5 tracking is ambiguous and raises.
    """
    _check_sector(n)
    start = pulse.point_at(0.0)
    if abs(start.omega) > 1e-9:
        raise InputError("tracking requires the pulse to start at omega = 0")
    if samples is None:
        samples = MIN_TRACK_SAMPLES * max(
            1, sum(1 for s in pulse.segments if isinstance(s, RampSegment))
        )
    samples = max(int(samples), 2)
    if n == 0:
        times = np.linspace(0.0, max(pulse.duration, 1e-12), samples)
        return TrackedTrajectory(
            times=times,
            indices=np.zeros(samples, dtype=int),
            energies=np.zeros(samples),
            vectors=np.ones((samples, 1), dtype=complex),
        )

    start_idx = _initial_index(n, start, config)
    ops = _sector_ops(n, config)

    for attempt in range(_MAX_REFINES + 1):
        times, oms, des = pulse.sample(points_per_segment=max(2, samples // len(pulse.segments)))
        hams = _batched_hamiltonians(ops, oms, des)
        w, v = np.linalg.eigh(hams)
        idx = np.empty(len(times), dtype=int)
        idx[0] = start_idx
        vec = v[0][:, start_idx]
        min_overlap = 1.0
        for i in range(1, len(times)):
            ov = np.abs(v[i].conj().T @ vec) ** 2
            j = int(np.argmax(ov))
            min_overlap = min(min_overlap, float(ov[j]))
            idx[i] = j
            vec = v[i][:, j]
        if min_overlap >= _REFINE_TOL or attempt == _MAX_REFINES:
            if min_overlap < _AMBIGUITY_TOL:
                raise TrackingError(
                    f"tracking ambiguity in sector {n}: overlap^2 {min_overlap:.3f} < 0.5"
                )
            energies = w[np.arange(len(times)), idx]
            vectors = v[np.arange(len(times)), :, idx]
            return TrackedTrajectory(times=times, indices=idx, energies=energies, vectors=vectors)
        samples *= 2
    raise TrackingError("unreachable")  # pragma: no cover


def coherent_gate_channel(
    pulse_down: PiecewisePulse,
    pulse_up: PiecewisePulse,
    config: PlaquetteConfig,
    tolerance: float = 1e-9,
) -> np.ndarray:
    """Diagonal amplitudes a_z over the 16 computational basis states.

    Bit v of z set means atom v is in the down state. The first pulse drives
    the n down atoms, the second (identical schedule on the up states) the
    remaining 4-n; spectators are uncoupled, so the channel is exactly
    diagonal and depends only on n.
    """
    amp_down = np.empty(PLAQUETTE_SIZE + 1, dtype=complex)
    amp_up = np.empty(PLAQUETTE_SIZE + 1, dtype=complex)
    for n in range(PLAQUETTE_SIZE + 1):
        amp_down[n] = evolve_sector(pulse_down, n, config, tolerance).propagator[0, 0]
        amp_up[n] = evolve_sector(pulse_up, n, config, tolerance).propagator[0, 0]
    a = np.empty(2**PLAQUETTE_SIZE, dtype=complex)
    for z in range(2**PLAQUETTE_SIZE):
        n = bin(z).count("1")
        a[z] = amp_down[n] * amp_up[PLAQUETTE_SIZE - n]
    return a


def gate_target_phases(gamma: float) -> np.ndarray:
    """Ideal diagonal: exp(+i gamma) on odd-down states, exp(-i gamma) on even."""
    u = np.empty(2**PLAQUETTE_SIZE, dtype=complex)
    for z in range(2**PLAQUETTE_SIZE):
        odd = bin(z).count("1") % 2 == 1
        u[z] = np.exp(1j * gamma) if odd else np.exp(-1j * gamma)
    return u


def coherent_average_fidelity(amplitudes, gamma: float, tolerance: float = 1e-6) -> float:
    """Average gate fidelity of a diagonal channel against the ideal gate.

    For a single-Kraus (coherent) map, F = (d + |tr(U+ M)|^2) / (d(d+1)) with
    d = 16; |tr| already maximizes over the global phase.
    """
    a = np.asarray(amplitudes, dtype=complex)
    if a.shape != (16,):
        raise InputError("expected 16 diagonal amplitudes")
    if np.any(np.abs(a) > 1.0 + tolerance):
        raise InputError("amplitudes exceed unit modulus beyond tolerance")
    u = gate_target_phases(gamma)
    tr = np.sum(np.conj(u) * a)
    d = 16
    return float((d + np.abs(tr) ** 2) / (d * (d + 1)))


def sweep_spectrum(
    config: PlaquetteConfig,
    omega: float,
    deltas,
    sectors,
) -> list[tuple[float, int, int, float, float]]:
    """Rows (delta, n, eigenvalue_index, energy, overlap_with_k0) for CSV export."""
    if not sectors:
        raise InputError("sector list must not be empty")
    rows = []
    for n in sorted(set(int(s) for s in sectors)):
        _check_sector(n)
        ops = _sector_ops(n, config)
        de = np.asarray(deltas, dtype=float)
        hams = _batched_hamiltonians(ops, np.full_like(de, float(omega)), de)
        w, v = np.linalg.eigh(hams)
        for i, d in enumerate(de):
            for j in range(n + 1):
                rows.append(
                    (float(d), n, j, float(w[i, j]), float(np.abs(v[i, 0, j]) ** 2))
                )
    return rows
