"""Gate dynamics under radiative Rydberg decay.

Each atom has four levels {down, up, r, d}: the qubit pair, the driven
Rydberg state, and an absorbing reservoir d for decay out of the qubit
basis. Spontaneous emission from r at rate gamma_r branches 1/5 : 1/5 : 3/5
into down : up : d. The master equation is

    drho/dt = -i[H, rho] + sum_{k,l} L_l^k rho L_l^k+ - (1/2){D_r, rho},

with L_l^k = sqrt(b_l gamma_r) |l_k><r_k| and D_r = gamma_r sum_k n_r^k.

``lindblad_evolve`` and the reference channel integrate the full 4^4-level
space (a 65536-dimensional linear ODE, stored as the 256x256 density
matrix); the production channel in ``symchannel`` reduces to permutation-
symmetric letter spaces and is cross-validated against the reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError
from .plaquette import STEP_NORM_BOUND, PlaquetteConfig, gate_target_phases
from .pulses import PiecewisePulse

LEVELS = 4  # g(down)=0, u(up)=1, r=2, d=3
N_ATOMS = 4
DIM = LEVELS**N_ATOMS  # 256
QUBIT_DIM = 2**N_ATOMS  # 16
G, U, R, D = 0, 1, 2, 3


@dataclass(frozen=True)
class DecayModel:
    """Rydberg decay rate (1/us) and hyperfine branching ratios."""

    gamma_r: float = 1.0 / 150.0
    branch_down: float = 0.2
    branch_up: float = 0.2
    branch_d: float = 0.6

    def __post_init__(self):
        if self.gamma_r < 0:
            raise InputError("decay rate must be >= 0")
        b = (self.branch_down, self.branch_up, self.branch_d)
        if any(x < 0 for x in b) or abs(sum(b) - 1.0) > 1e-12:
            raise InputError("branching ratios must be nonnegative and sum to 1")


def qubit_state_index(z: int) -> int:
    """Full-space index of computational state z (bit i set = atom i in down)."""
    idx = 0
    for i in range(N_ATOMS):
        level = G if (z >> i) & 1 else U
        idx += level * LEVELS**i
    return idx


QUBIT_INDICES = np.array([qubit_state_index(z) for z in range(QUBIT_DIM)])


def _single_site_operator(op: np.ndarray, site: int) -> np.ndarray:
    mats = [np.eye(LEVELS, dtype=complex)] * N_ATOMS
    mats[site] = op
    out = mats[N_ATOMS - 1]
    for i in range(N_ATOMS - 2, -1, -1):
        out = np.kron(out, mats[i])  # site 0 is the fastest-varying index
    return out


def _coupling_matrix(coupled: str) -> np.ndarray:
    """sum_i (|r_i><b_i| + h.c.) for b the driven qubit level."""
    if coupled not in ("down", "up"):
        raise InputError("coupled must be 'down' or 'up'")
    b = G if coupled == "down" else U
    c1 = np.zeros((LEVELS, LEVELS), dtype=complex)
    c1[R, b] = 1.0
    c1[b, R] = 1.0
    out = np.zeros((DIM, DIM), dtype=complex)
    for k in range(N_ATOMS):
        out += _single_site_operator(c1, k)
    return out


_COUPLING = {"down": None, "up": None}


def full_hamiltonian(omega: float, delta: float, config: PlaquetteConfig, coupled: str) -> np.ndarray:
    """Plaquette Hamiltonian on the 256-dim space, driving ``coupled`` in {'down','up'}."""
    if _COUPLING[coupled] is None:
        _COUPLING[coupled] = _coupling_matrix(coupled)
    diag = -delta * _RYD_COUNT + config.interaction * _RYD_COUNT * (_RYD_COUNT - 1) / 2.0
    h = (omega / 2.0) * _COUPLING[coupled]
    h[np.diag_indices(DIM)] += diag
    return h


def _rydberg_counts() -> np.ndarray:
    counts = np.zeros(DIM)
    for idx in range(DIM):
        x = idx
        c = 0
        for _ in range(N_ATOMS):
            if x % LEVELS == R:
                c += 1
            x //= LEVELS
        counts[idx] = c
    return counts


_RYD_COUNT = _rydberg_counts()


class _JumpApplier:
    """Applies sum_k,l L rho L+ via index maps (jump ops are single entries)."""

    def __init__(self, decay: DecayModel):
        self.rates = [
            (G, decay.branch_down * decay.gamma_r),
            (U, decay.branch_up * decay.gamma_r),
            (D, decay.branch_d * decay.gamma_r),
        ]
        # per site: source rows with atom in r, and their targets with atom in l
        self.site_maps = []
        for k in range(N_ATOMS):
            stride = LEVELS**k
            idx = np.arange(DIM)
            levels = (idx // stride) % LEVELS
            src = np.where(levels == R)[0]
            maps = {}
            for l, _ in self.rates:
                maps[l] = src + (l - R) * stride
            self.site_maps.append((src, maps))

    def apply(self, rho: np.ndarray, out: np.ndarray) -> None:
        # rho/out may carry a leading batch axis
        for src, maps in self.site_maps:
            block = rho[..., src[:, None], src[None, :]]
            for l, rate in self.rates:
                if rate == 0.0:
                    continue
                tgt = maps[l]
                out[..., tgt[:, None], tgt[None, :]] += rate * block


def lindblad_rhs(rho: np.ndarray, h: np.ndarray, decay: DecayModel, jumps: _JumpApplier) -> np.ndarray:
    out = -1j * (h @ rho - rho @ h)
    damp = 0.5 * decay.gamma_r * (_RYD_COUNT[:, None] + _RYD_COUNT[None, :])
    out -= damp * rho
    jumps.apply(rho, out)
    return out


@dataclass
class LindbladResult:
    rho: np.ndarray
    metadata: dict = field(default_factory=dict)


def lindblad_evolve(
    pulse: PiecewisePulse,
    coupled: str,
    config: PlaquetteConfig,
    decay: DecayModel,
    rho0: np.ndarray,
    steps_per_segment: int | None = None,
    trace_tol: float = 1e-8,
) -> LindbladResult:
    """Integrate the full-space master equation over a pulse (RK4, fixed step).

    The step is bounded by 0.05 / max(||H||, gamma_r). The trace may only
    decrease (leakage into d is counted in the trace here since d is kept in
    the space; coherent evolution preserves it); growth beyond tolerance
    raises.
    """
    rho = np.array(rho0, dtype=complex)
    if rho.shape != (DIM, DIM):
        raise InputError(f"rho0 must be {DIM}x{DIM}")
    if np.linalg.norm(rho - rho.conj().T) > 1e-9 * max(1.0, np.linalg.norm(rho)):
        raise InputError("rho0 must be Hermitian")
    jumps = _JumpApplier(decay)
    tr0 = float(np.trace(rho).real)
    total_steps = 0
    for seg in pulse.segments:
        if seg.duration == 0:
            continue
        ts, oms, des = _segment_samples(seg)
        norm_bound = 4.0 * (np.max(np.abs(des)) + np.max(oms)) + 6.0 * config.interaction
        rate = max(norm_bound, decay.gamma_r)
        if steps_per_segment is None:
            steps = max(16, int(np.ceil(seg.duration * rate / STEP_NORM_BOUND)))
        else:
            steps = steps_per_segment
        if steps > 20_000_000:
            raise NumericalError("step-size underflow in lindblad_evolve")
        h_step = seg.duration / steps
        from .pulses import HoldSegment

        constant = isinstance(seg, HoldSegment)
        if constant:
            h_const = _segment_hamiltonian(seg, 0.0, config, coupled)
        for i in range(steps):
            t0 = i * h_step
            if constant:
                h_a = h_m = h_b = h_const
            else:
                h_a = _segment_hamiltonian(seg, t0, config, coupled)
                h_m = _segment_hamiltonian(seg, t0 + h_step / 2, config, coupled)
                h_b = _segment_hamiltonian(seg, t0 + h_step, config, coupled)
            k1 = lindblad_rhs(rho, h_a, decay, jumps)
            k2 = lindblad_rhs(rho + 0.5 * h_step * k1, h_m, decay, jumps)
            k3 = lindblad_rhs(rho + 0.5 * h_step * k2, h_m, decay, jumps)
            k4 = lindblad_rhs(rho + h_step * k3, h_b, decay, jumps)
            rho += (h_step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        total_steps += steps
    tr = float(np.trace(rho).real)
    if tr > tr0 + trace_tol:
        raise NumericalError(f"trace grew from {tr0} to {tr}")
    return LindbladResult(rho=rho, metadata={"steps": total_steps, "trace": tr})


def _segment_samples(seg):
    from .pulses import HoldSegment

    if isinstance(seg, HoldSegment):
        return None, np.array([seg.point.omega]), np.array([seg.point.delta])
    s = np.linspace(0.0, 1.0, 64)
    om, de = seg.path(s)
    return s, np.asarray(om, float), np.asarray(de, float)


def _segment_hamiltonian(seg, t: float, config: PlaquetteConfig, coupled: str) -> np.ndarray:
    from .pulses import HoldSegment

    if isinstance(seg, HoldSegment):
        om, de = seg.point.omega, seg.point.delta
    else:
        s = min(1.0, max(0.0, t / seg.duration if seg.duration else 0.0))
        om, de = seg.path(s)
        om, de = float(om), float(de)
    return full_hamiltonian(om, de, config, coupled)


@dataclass(frozen=True)
class QuantumChannel:
    """Linear map on the 16-dim qubit subspace, stored as a 256x256 superoperator.

    Column (z, z') holds the expansion of Lambda(|z><z'|); row index is
    (w, w') for <w|.|w'>. Trace may decrease (leakage); complete positivity
    holds up to integrator tolerance.
    """

    superoperator: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.superoperator.shape != (QUBIT_DIM**2, QUBIT_DIM**2):
            raise InputError("superoperator must be 256x256")

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return (self.superoperator @ rho.reshape(-1)).reshape(QUBIT_DIM, QUBIT_DIM)

    def choi(self) -> np.ndarray:
        s = self.superoperator.reshape(QUBIT_DIM, QUBIT_DIM, QUBIT_DIM, QUBIT_DIM)
        return s.transpose(0, 2, 1, 3).reshape(QUBIT_DIM**2, QUBIT_DIM**2) / 1.0

    def min_choi_eigenvalue(self) -> float:
        c = self.choi()
        c = 0.5 * (c + c.conj().T)
        return float(np.linalg.eigvalsh(c).min())

    def trace_defects(self) -> float:
        """Largest eigenvalue of the trace observable minus one.

        The channel is trace non-increasing iff Lambda+(I) <= I; values above
        ~1e-8 indicate trace gain on some input state.
        """
        t = np.zeros((QUBIT_DIM, QUBIT_DIM), dtype=complex)
        for z in range(QUBIT_DIM):
            for zp in range(QUBIT_DIM):
                col = self.superoperator[:, z * QUBIT_DIM + zp].reshape(QUBIT_DIM, QUBIT_DIM)
                t[z, zp] = np.trace(col)
        t = 0.5 * (t + t.conj().T)
        return float(np.linalg.eigvalsh(t).max() - 1.0)

    def save(self, path) -> None:
        import json

        payload = {
            "real": self.superoperator.real.tolist(),
            "imag": self.superoperator.imag.tolist(),
            "metadata": {k: v for k, v in self.metadata.items() if isinstance(v, (int, float, str, bool))},
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "QuantumChannel":
        import json

        with open(path) as fh:
            d = json.load(fh)
        s = np.asarray(d["real"], dtype=float) + 1j * np.asarray(d["imag"], dtype=float)
        return cls(superoperator=s, metadata=d.get("metadata", {}))


def coherent_channel(amplitudes) -> QuantumChannel:
    """Rank-1 channel rho -> M rho M+ for a diagonal M = diag(a_z)."""
    a = np.asarray(amplitudes, dtype=complex)
    s = np.zeros((QUBIT_DIM**2, QUBIT_DIM**2), dtype=complex)
    for z in range(QUBIT_DIM):
        for zp in range(QUBIT_DIM):
            s[z * QUBIT_DIM + zp, z * QUBIT_DIM + zp] = a[z] * np.conj(a[zp])
    return QuantumChannel(superoperator=s, metadata={"kind": "coherent"})


def _evolve_batch(
    pulse: PiecewisePulse,
    coupled: str,
    config: PlaquetteConfig,
    decay: DecayModel,
    rhos: np.ndarray,
    steps_per_segment: int | None,
) -> np.ndarray:
    """RK4 over a stack of (possibly non-Hermitian) operators; same stepping
    policy as lindblad_evolve, batched through BLAS."""
    jumps = _JumpApplier(decay)
    rho = np.array(rhos, dtype=complex)
    for seg in pulse.segments:
        if seg.duration == 0:
            continue
        _, oms, des = _segment_samples(seg)
        norm_bound = 4.0 * (np.max(np.abs(des)) + np.max(oms)) + 6.0 * config.interaction
        rate = max(norm_bound, decay.gamma_r)
        steps = steps_per_segment or max(16, int(np.ceil(seg.duration * rate / STEP_NORM_BOUND)))
        h_step = seg.duration / steps
        from .pulses import HoldSegment

        constant = isinstance(seg, HoldSegment)
        if constant:
            h_const = _segment_hamiltonian(seg, 0.0, config, coupled)
        for i in range(steps):
            t0 = i * h_step
            if constant:
                h_a = h_m = h_b = h_const
            else:
                h_a = _segment_hamiltonian(seg, t0, config, coupled)
                h_m = _segment_hamiltonian(seg, t0 + h_step / 2, config, coupled)
                h_b = _segment_hamiltonian(seg, t0 + h_step, config, coupled)
            k1 = lindblad_rhs(rho, h_a, decay, jumps)
            k2 = lindblad_rhs(rho + 0.5 * h_step * k1, h_m, decay, jumps)
            k3 = lindblad_rhs(rho + 0.5 * h_step * k2, h_m, decay, jumps)
            k4 = lindblad_rhs(rho + h_step * k3, h_b, decay, jumps)
            rho += (h_step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def gate_channel_reference(
    pulse_down: PiecewisePulse,
    pulse_up: PiecewisePulse,
    config: PlaquetteConfig,
    decay: DecayModel,
    steps_per_segment: int | None = None,
    chunk: int = 32,
) -> QuantumChannel:
    """Channel by brute force: evolve all 256 qubit basis operators full-space.

    Intended for validating the accelerated path on short pulses; the
    production path lives in ``symchannel.gate_channel_symmetric``.
    """
    s = np.zeros((QUBIT_DIM**2, QUBIT_DIM**2), dtype=complex)
    cols = [(z, zp) for z in range(QUBIT_DIM) for zp in range(QUBIT_DIM)]
    for start in range(0, len(cols), chunk):
        batch_cols = cols[start : start + chunk]
        rhos = np.zeros((len(batch_cols), DIM, DIM), dtype=complex)
        for i, (z, zp) in enumerate(batch_cols):
            rhos[i, QUBIT_INDICES[z], QUBIT_INDICES[zp]] = 1.0
        out = _evolve_batch(pulse_down, "down", config, decay, rhos, steps_per_segment)
        out = _evolve_batch(pulse_up, "up", config, decay, out, steps_per_segment)
        for i, (z, zp) in enumerate(batch_cols):
            block = out[i][np.ix_(QUBIT_INDICES, QUBIT_INDICES)]
            s[:, z * QUBIT_DIM + zp] = block.reshape(-1)
    return QuantumChannel(superoperator=s, metadata={"method": "reference"})


def average_gate_fidelity(channel: QuantumChannel, gamma: float) -> float:
    """Nielsen average fidelity against the ideal four-body gate of phase gamma.

    F = (d + tr(U~+ L~)) / (d (d+1)) with d = 16; the superoperator trace is
    invariant under the target's global phase.
    """
    return average_fidelity_to_diagonal(channel, gate_target_phases(gamma))


def average_fidelity_to_diagonal(channel: QuantumChannel, target_phases) -> float:
    u = np.asarray(target_phases, dtype=complex)
    if u.shape != (QUBIT_DIM,):
        raise InputError("target must be 16 diagonal phases")
    diag = np.diagonal(channel.superoperator)
    lam = diag.reshape(QUBIT_DIM, QUBIT_DIM)  # lam[z, z'] = <z|L(|z><z'|)|z'>
    tr = np.sum(np.conj(u)[:, None] * u[None, :] * lam)
    d = QUBIT_DIM
    return float((d + tr.real) / (d * (d + 1)))
