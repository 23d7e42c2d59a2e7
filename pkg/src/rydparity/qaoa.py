"""Statevector parity-QAOA with trajectory-sampled depolarizing noise.

A circuit layer applies the constraint phase exp(-i gamma H_C), the local
field phase exp(-i beta H_Z), and the driver exp(-i alpha H_X), with
H_C = -sum over plaquettes of the member-spin product, H_Z = sum J_v z_v and
H_X a product of single-qubit x rotations. Noise is unraveled per shot:
after each four-body gate a uniformly random non-identity 4-qubit Pauli with
probability p4, after each single-qubit gate a random non-identity Pauli
with probability p1 ("pauli" mode). The "replace" mode samples the exactly
equivalent channel by measuring and re-randomizing the touched qubits with
the rescaled probabilities p 4^k/(4^k - 1), which keeps high-noise runs
affordable; both modes produce the same measurement distribution.

Per-shot randomness comes from streams seeded by (seed, update, shot), so
aggregates are independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .encoding import ParityLayout, config_from_index, parity_energy
from .errors import InputError

MAX_QAOA_QUBITS = 24
_GATE_KINDS = ("alpha", "beta", "gamma")
_LUT_MAX_VALUES = 4096


@dataclass(frozen=True)
class QaoaParams:
    """Variational angles, one (alpha, beta, gamma) triple per layer."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    gamma: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.alpha) == len(self.beta) == len(self.gamma)) or len(self.alpha) < 1:
            raise InputError("alpha, beta, gamma must have equal length p >= 1")

    @property
    def depth(self) -> int:
        return len(self.alpha)

    @classmethod
    def zeros(cls, p: int) -> "QaoaParams":
        return cls(alpha=(0.0,) * p, beta=(0.0,) * p, gamma=(0.0,) * p)

    def as_array(self) -> np.ndarray:
        return np.array([*self.alpha, *self.beta, *self.gamma])

    @classmethod
    def from_array(cls, x, p: int) -> "QaoaParams":
        x = np.asarray(x, dtype=float)
        return cls(alpha=tuple(x[:p]), beta=tuple(x[p : 2 * p]), gamma=tuple(x[2 * p :]))


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing rates per gate application."""

    p1: float = 0.0
    p4: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.p1 <= 1.0 and 0.0 <= self.p4 <= 1.0):
            raise InputError("noise probabilities must lie in [0, 1]")


class CircuitTables:
    """Precomputed diagonal tables for one layout.

    field_sum[idx] = sum J_v z_v(idx); plaq_prefix[g][idx] = sum of the first
    g plaquette spin products. Bit i of idx set means z_i = -1.
    """

    def __init__(self, layout: ParityLayout):
        k = layout.num_qubits
        if k > MAX_QAOA_QUBITS:
            raise InputError(f"K={k} exceeds statevector limit {MAX_QAOA_QUBITS}")
        self.layout = layout
        self.num_qubits = k
        self.dim = 1 << k
        idx = np.arange(self.dim, dtype=np.uint32)
        fields = layout.local_fields()
        z = np.zeros(self.dim)
        for v in range(k):
            bit = ((idx >> np.uint32(v)) & np.uint32(1)).astype(np.int8)
            z += fields[v] * (1 - 2 * bit.astype(np.float64))
        self.field_sum = z
        pars = []
        for p in layout.plaquettes:
            acc = np.zeros(self.dim, dtype=np.uint32)
            for m in p.members:
                acc ^= (idx >> np.uint32(m)) & np.uint32(1)
            pars.append((1 - 2 * acc.astype(np.int8)).astype(np.int8))
        self.plaq_parity = pars
        prefix = [np.zeros(self.dim, dtype=np.int8)]
        for par in pars:
            prefix.append((prefix[-1] + par).astype(np.int8))
        self.plaq_prefix = prefix  # length n_plaq + 1
        self.energies = self.field_sum - layout.penalty_strength * prefix[-1].astype(np.float64)
        # discrete-value tables for LUT-based diagonal kernels
        z_values, z_codes = np.unique(self.field_sum, return_inverse=True)
        self.z_values = z_values
        self.z_codes = z_codes.astype(np.int16) if len(z_values) <= _LUT_MAX_VALUES else None
        self.n_plaq = len(pars)
        self.p_codes_full = (prefix[-1].astype(np.int16) + self.n_plaq).astype(np.int16)
        self.p_value_range = np.arange(-self.n_plaq, self.n_plaq + 1, dtype=np.float64)

    def plus_state(self) -> np.ndarray:
        return np.full(self.dim, 1.0 / np.sqrt(self.dim), dtype=complex)

    def gamma_phase(self, gamma: float, first: int = 0, last: int | None = None) -> np.ndarray:
        """exp(-i gamma H_C) restricted to plaquette gates [first, last)."""
        if last is None:
            last = len(self.plaq_parity)
        seg = self.plaq_prefix[last].astype(np.float64) - self.plaq_prefix[first]
        return np.exp(1j * gamma * seg)

    def beta_phase(self, beta: float) -> np.ndarray:
        return np.exp(-1j * beta * self.field_sum)


def _rotation_groups(k: int) -> list[tuple[int, int]]:
    """(start_bit, width) fused x-rotation groups covering all qubits."""
    groups = []
    bit = 0
    while bit < k:
        width = min(4, k - bit)
        groups.append((bit, width))
        bit += width
    return groups


def _x_rotation_matrix(alpha: float, width: int) -> np.ndarray:
    r2 = np.array(
        [[np.cos(alpha), -1j * np.sin(alpha)], [-1j * np.sin(alpha), np.cos(alpha)]]
    )
    out = np.array([[1.0 + 0j]])
    for _ in range(width):
        out = np.kron(r2, out)
    return out


def apply_x_layer(state: np.ndarray, alpha: float, k: int) -> np.ndarray:
    """exp(-i alpha sigma_x) on every qubit, via fused group rotations."""
    for start, width in _rotation_groups(k):
        r = _x_rotation_matrix(alpha, width)
        lo = 1 << start
        mid = 1 << width
        hi = state.size // (lo * mid)
        state = state.reshape(hi, mid, lo)
        state = np.einsum("ij,ajb->aib", r, state, optimize=True)
    return state.reshape(-1)


def apply_layer(state: np.ndarray, layout_or_tables, alpha: float, beta: float, gamma: float) -> np.ndarray:
    """One noiseless QAOA layer: constraint phase, field phase, driver."""
    tables = layout_or_tables if isinstance(layout_or_tables, CircuitTables) else CircuitTables(layout_or_tables)
    state = np.asarray(state, dtype=complex).reshape(-1)
    if state.size != tables.dim:
        raise InputError("state dimension does not match the layout")
    state = state * tables.gamma_phase(gamma)
    state = state * tables.beta_phase(beta)
    return apply_x_layer(state, alpha, tables.num_qubits)


def noiseless_state(tables: CircuitTables, params: QaoaParams) -> np.ndarray:
    state = tables.plus_state()
    for j in range(params.depth):
        state = apply_layer(state, tables, params.alpha[j], params.beta[j], params.gamma[j])
    return state


def _apply_pauli(state: np.ndarray, qubit: int, kind: int, k: int) -> np.ndarray:
    """kind: 0 = X, 1 = Y, 2 = Z."""
    lo = 1 << qubit
    view = state.reshape(-1, 2, lo)
    if kind == 0:
        view = view[:, ::-1, :]
    elif kind == 1:
        view = view[:, ::-1, :] * np.array([-1j, 1j], dtype=state.dtype).reshape(1, 2, 1)
    else:
        view = view * np.array([1.0, -1.0], dtype=state.dtype).reshape(1, 2, 1)
    return np.ascontiguousarray(view).reshape(-1)


def _apply_pauli_word(state: np.ndarray, qubits, word: int, k: int) -> np.ndarray:
    """word encodes base-4 digits per qubit: 0 = I, 1 = X, 2 = Y, 3 = Z."""
    for q in qubits:
        digit = word % 4
        word //= 4
        if digit:
            state = _apply_pauli(state, q, digit - 1, k)
    return state


def _measure_replace(state: np.ndarray, qubits, rng, k: int) -> np.ndarray:
    """Collapse ``qubits`` in the z basis and re-prepare them uniformly at random."""
    qubits = list(qubits)
    m = len(qubits)
    view = state.reshape((2,) * k)
    axes = [k - 1 - q for q in qubits]
    moved = np.moveaxis(view, axes, range(m)).reshape(1 << m, -1)
    probs = np.einsum("ij,ij->i", moved.real, moved.real) + np.einsum(
        "ij,ij->i", moved.imag, moved.imag
    )
    total = probs.sum()
    if total <= 0:
        raise InputError("cannot collapse a zero state")
    outcome = int(rng.choice(1 << m, p=probs / total))
    row = moved[outcome] / np.sqrt(probs[outcome])
    fresh = int(rng.integers(0, 1 << m))
    out = np.zeros_like(moved)
    out[fresh] = row
    out = np.moveaxis(out.reshape((2,) * k), range(m), axes)
    return np.ascontiguousarray(out).reshape(-1)


_SAMPLE_BINS = 1024


def _sample_index(state: np.ndarray, rng) -> int:
    """Two-stage z-basis sample: pick a coarse bin, then an index inside it."""
    n = state.size
    if n < 4 * _SAMPLE_BINS:
        probs = (state.real.astype(np.float64)) ** 2 + (state.imag.astype(np.float64)) ** 2
        cum = np.cumsum(probs)
        return int(np.searchsorted(cum, rng.uniform(0.0, cum[-1])))
    sums = _kernels.bin_sums(state, _SAMPLE_BINS)
    cum = np.cumsum(sums)
    b = int(np.searchsorted(cum, rng.uniform(0.0, cum[-1])))
    b = min(b, _SAMPLE_BINS - 1)
    width = n // _SAMPLE_BINS
    seg = state[b * width : (b + 1) * width]
    probs = (seg.real.astype(np.float64)) ** 2 + (seg.imag.astype(np.float64)) ** 2
    cum2 = np.cumsum(probs)
    i = int(np.searchsorted(cum2, rng.uniform(0.0, cum2[-1])))
    return b * width + min(i, width - 1)


def _shot_rng(seed: int, update: int, shot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(update, shot)))


class _TrajectoryRunner:
    """Replays circuits per shot with noise events; caches noiseless prefixes.

    Trajectory states are complex64 (see _kernels); the final measurement
    distribution of the noiseless branch is cached since most shots carry no
    event at small noise rates.
    """

    def __init__(self, tables: CircuitTables, params: QaoaParams, noise: NoiseModel, unraveling: str):
        if unraveling not in ("pauli", "replace"):
            raise InputError("unraveling must be 'pauli' or 'replace'")
        if unraveling == "replace":
            q1 = noise.p1 * 4.0 / 3.0
            q4 = noise.p4 * 256.0 / 255.0
            if q1 > 1.0 or q4 > 1.0:
                raise InputError("replace unraveling needs p1 <= 3/4 and p4 <= 255/256")
            self.q1, self.q4 = q1, q4
        else:
            self.q1, self.q4 = noise.p1, noise.p4
        self.unraveling = unraveling
        self.tables = tables
        self.params = params
        self.k = tables.num_qubits
        self.n_plaq = tables.n_plaq
        # gate-application schedule: per layer, plaquette gates then beta then alpha
        self.gates_per_layer = self.n_plaq + 2 * self.k
        self.total_gates = params.depth * self.gates_per_layer
        self._prefixes: list[np.ndarray] | None = None
        self._final_cum: np.ndarray | None = None
        self._event_p = self._event_probs()

    def _event_probs(self) -> np.ndarray:
        p = np.empty(self.total_gates)
        for j in range(self.params.depth):
            base = j * self.gates_per_layer
            p[base : base + self.n_plaq] = self.q4
            p[base + self.n_plaq : base + self.gates_per_layer] = self.q1
        return p

    def _gamma_segment(self, state: np.ndarray, gamma: float, first: int, last: int) -> np.ndarray:
        """In-place phases of plaquette gates [first, last) at angle gamma."""
        if last <= first:
            return state
        t = self.tables
        seg = (t.plaq_prefix[last].astype(np.int16) - t.plaq_prefix[first]).astype(np.int16)
        codes = seg + self.n_plaq
        lut = np.exp(1j * gamma * t.p_value_range).astype(np.complex64)
        return _kernels.diag_single_phase_inplace(state, codes, lut)

    def _field_diag(self, state: np.ndarray, beta: float) -> np.ndarray:
        t = self.tables
        if t.z_codes is not None:
            lut = np.exp(-1j * beta * t.z_values).astype(np.complex64)
            return _kernels.diag_single_phase_inplace(state, t.z_codes, lut)
        state *= np.exp(-1j * beta * t.field_sum).astype(np.complex64)
        return state

    def _layer_diag(self, state: np.ndarray, gamma: float, beta: float) -> np.ndarray:
        """Full gamma+beta diagonal of one layer (they commute)."""
        t = self.tables
        if t.z_codes is not None:
            lut = np.exp(
                1j * gamma * t.p_value_range[:, None] - 1j * beta * t.z_values[None, :]
            ).astype(np.complex64)
            return _kernels.diag_phase_inplace(state, t.p_codes_full, t.z_codes, lut)
        self._gamma_segment(state, gamma, 0, self.n_plaq)
        return self._field_diag(state, beta)

    def _ensure_prefixes(self) -> list[np.ndarray]:
        """Noiseless states at every layer-part boundary (gamma/beta/alpha)."""
        if self._prefixes is None:
            state = self.tables.plus_state().astype(np.complex64)
            parts = [state]
            for j in range(self.params.depth):
                state = state.copy()
                self._gamma_segment(state, self.params.gamma[j], 0, self.n_plaq)
                parts.append(state)
                state = state.copy()
                self._field_diag(state, self.params.beta[j])
                parts.append(state)
                state = _kernels.x_layer_inplace(state.copy(), self.params.alpha[j], self.k)
                parts.append(state)
            self._prefixes = parts
        return self._prefixes

    def final_noiseless(self) -> np.ndarray:
        return self._ensure_prefixes()[-1]

    def sample_noiseless(self, rng) -> int:
        if self._final_cum is None:
            probs = np.abs(self.final_noiseless().astype(np.complex128)) ** 2
            self._final_cum = np.cumsum(probs)
        u = rng.uniform(0.0, self._final_cum[-1])
        return int(np.searchsorted(self._final_cum, u))

    def _event_op(self, state, qubits, rng):
        if self.unraveling == "replace":
            return _measure_replace(state, qubits, rng, self.k)
        if len(qubits) == 1:
            kind = int(rng.integers(0, 3))
            return _apply_pauli(state, qubits[0], kind, self.k)
        word = int(rng.integers(1, 256))
        return _apply_pauli_word(state, qubits, word, self.k)

    def run_shot(self, rng) -> int:
        """One trajectory; returns the sampled configuration index."""
        draws = rng.uniform(size=self.total_gates)
        events = np.where(draws < self._event_p)[0]
        if len(events) == 0:
            return self.sample_noiseless(rng)

        prefixes = self._ensure_prefixes()
        first = int(events[0])
        layer0, pos0 = divmod(first, self.gates_per_layer)
        if pos0 < self.n_plaq:
            part0 = 3 * layer0  # start of this layer's gamma part
        elif pos0 < self.n_plaq + self.k:
            part0 = 3 * layer0 + 1
        else:
            part0 = 3 * layer0 + 2
        state = prefixes[part0].copy()

        ev = list(events)
        t = self.tables
        for j in range(layer0, self.params.depth):
            base = j * self.gates_per_layer
            # gamma part
            if 3 * j >= part0:
                here = [e - base for e in ev if base <= e < base + self.n_plaq]
                g = 0
                for pos in here:
                    self._gamma_segment(state, self.params.gamma[j], g, pos + 1)
                    plaq = t.layout.plaquettes[pos].members
                    state = self._event_op(state, list(plaq), rng)
                    g = pos + 1
                self._gamma_segment(state, self.params.gamma[j], g, self.n_plaq)
            # beta part
            if 3 * j + 1 >= part0:
                self._field_diag(state, self.params.beta[j])
                for e in ev:
                    if base + self.n_plaq <= e < base + self.n_plaq + self.k:
                        state = self._event_op(state, [e - base - self.n_plaq], rng)
            # alpha part
            if 3 * j + 2 >= part0:
                state = _kernels.x_layer_inplace(state, self.params.alpha[j], self.k)
                for e in ev:
                    if base + self.n_plaq + self.k <= e < base + self.gates_per_layer:
                        state = self._event_op(state, [e - base - self.n_plaq - self.k], rng)
        return _sample_index(state, rng)


def noisy_shot(
    layout_or_tables,
    params: QaoaParams,
    noise: NoiseModel,
    rng: np.random.Generator,
    unraveling: str = "pauli",
) -> np.ndarray:
    """One noisy circuit execution; returns the measured spin configuration."""
    tables = layout_or_tables if isinstance(layout_or_tables, CircuitTables) else CircuitTables(layout_or_tables)
    runner = _TrajectoryRunner(tables, params, noise, unraveling)
    idx = runner.run_shot(rng)
    return config_from_index(idx, tables.num_qubits)


@dataclass
class EnergyEstimate:
    mean: float
    stderr: float
    shots: int


def estimate_energy(
    layout_or_tables,
    params: QaoaParams,
    noise: NoiseModel,
    shots: int,
    seed: int,
    update_index: int = 0,
    unraveling: str = "pauli",
) -> EnergyEstimate:
    """Shot-based energy estimate: mean parity energy over sampled bitstrings."""
    if shots < 1:
        raise InputError("shots must be >= 1")
    tables = layout_or_tables if isinstance(layout_or_tables, CircuitTables) else CircuitTables(layout_or_tables)
    runner = _TrajectoryRunner(tables, params, noise, unraveling)
    energies = np.empty(shots)
    for s in range(shots):
        rng = _shot_rng(seed, update_index, s)
        idx = runner.run_shot(rng)
        energies[s] = tables.energies[idx]
    stderr = float(np.std(energies, ddof=1) / np.sqrt(shots)) if shots > 1 else 0.0
    return EnergyEstimate(mean=float(np.mean(energies)), stderr=stderr, shots=shots)


@dataclass
class UpdateRecord:
    update: int
    param_index: int
    old_value: float
    new_value: float
    energy_estimate: float
    stderr: float
    accepted: bool
    best_energy: float


@dataclass
class QaoaRun:
    params: QaoaParams
    records: list[UpdateRecord]
    initial_energy: float
    final_energy: float
    final_stderr: float
    seed: int
    noise: NoiseModel
    shots: int
    final_shots: int

    @property
    def reference_trace(self) -> np.ndarray:
        """Accepted-reference energy after each update (non-increasing)."""
        out = np.empty(len(self.records))
        ref = self.initial_energy
        for i, r in enumerate(self.records):
            if r.accepted:
                ref = r.energy_estimate
            out[i] = ref
        return out


def stochastic_optimize(
    layout_or_tables,
    depth: int,
    noise: NoiseModel,
    updates: int,
    shots: int,
    seed: int,
    proposal_scale: float = 0.1,
    final_shots: int = 5000,
    unraveling: str = "pauli",
    remeasure_reference: bool = False,
) -> QaoaRun:
    """Stochastic accept/reject optimization of the 3p angles.

    Starts from all-zero parameters; each update perturbs one uniformly
    chosen parameter by a Gaussian of scale ``proposal_scale``, re-estimates
    the energy with fresh shots, and accepts only if the estimate decreased
    (against the stored reference estimate, unless ``remeasure_reference``).
    """
    if updates < 1:
        raise InputError("updates must be >= 1")
    tables = layout_or_tables if isinstance(layout_or_tables, CircuitTables) else CircuitTables(layout_or_tables)
    meta_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xA11CE,)))
    x = QaoaParams.zeros(depth).as_array()
    reference = estimate_energy(tables, QaoaParams.from_array(x, depth), noise, shots, seed, 0, unraveling)
    initial = reference.mean
    best = reference.mean
    records: list[UpdateRecord] = []
    for u in range(1, updates + 1):
        i = int(meta_rng.integers(0, 3 * depth))
        delta = float(meta_rng.normal(0.0, proposal_scale)) if proposal_scale > 0 else 0.0
        x_prop = x.copy()
        x_prop[i] += delta
        est = estimate_energy(tables, QaoaParams.from_array(x_prop, depth), noise, shots, seed, u, unraveling)
        if remeasure_reference:
            reference = estimate_energy(
                tables, QaoaParams.from_array(x, depth), noise, shots, seed, -u, unraveling
            )
        accepted = est.mean < reference.mean
        if accepted:
            x = x_prop
            reference = est
        best = min(best, est.mean)
        records.append(
            UpdateRecord(
                update=u,
                param_index=i,
                old_value=float(x_prop[i] - delta),
                new_value=float(x_prop[i]),
                energy_estimate=est.mean,
                stderr=est.stderr,
                accepted=accepted,
                best_energy=best,
            )
        )
    final = estimate_energy(
        tables, QaoaParams.from_array(x, depth), noise, final_shots, seed, updates + 1, unraveling
    )
    return QaoaRun(
        params=QaoaParams.from_array(x, depth),
        records=records,
        initial_energy=initial,
        final_energy=final.mean,
        final_stderr=final.stderr,
        seed=seed,
        noise=noise,
        shots=shots,
        final_shots=final_shots,
    )


def residual_energy(e_mean: float, e_min: float, e_max: float) -> float:
    """(E - E_min) / (E_max - E_min); not clamped, so noise can exceed [0, 1]."""
    if not e_max > e_min:
        raise InputError("requires e_max > e_min")
    return float((e_mean - e_min) / (e_max - e_min))


@dataclass
class EnsembleLevel:
    p4: float
    residuals: list[float]
    median: float
    q25: float
    q75: float


def _run_seed(seed: int, level_index: int, run_index: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(level_index, run_index))
    return int(np.random.default_rng(ss).integers(0, 2**63 - 1))


def _ensemble_worker(args) -> "QaoaRun":
    (layout_dict, depth, p1, p4, updates, shots, run_seed, final_shots, unraveling, proposal_scale, jit_threads) = args
    if jit_threads:
        try:
            import numba

            numba.set_num_threads(jit_threads)
        except ImportError:
            pass
    layout = ParityLayout.from_dict(layout_dict)
    return stochastic_optimize(
        CircuitTables(layout),
        depth,
        NoiseModel(p1=p1, p4=p4),
        updates,
        shots,
        run_seed,
        proposal_scale=proposal_scale,
        final_shots=final_shots,
        unraveling=unraveling,
    )


def optimize_runs(
    layout: ParityLayout,
    depth: int,
    noise: NoiseModel,
    n_runs: int,
    seed: int,
    updates: int = 200,
    shots: int = 500,
    final_shots: int = 5000,
    unraveling: str = "pauli",
    proposal_scale: float = 0.1,
    processes: int = 1,
    level_index: int = 0,
) -> list[QaoaRun]:
    """Independent stochastic optimizations with derived per-run seeds.

    Runs are reproducible and order-independent; ``processes`` > 1 executes
    them in spawned workers with identical results.
    """
    jit_threads = 1 if processes > 1 else 0
    jobs = [
        (
            layout.to_dict(),
            depth,
            noise.p1,
            noise.p4,
            updates,
            shots,
            _run_seed(seed, level_index, r),
            final_shots,
            unraveling,
            proposal_scale,
            jit_threads,
        )
        for r in range(n_runs)
    ]
    if processes > 1:
        import concurrent.futures
        import multiprocessing

        ctx = multiprocessing.get_context("spawn")  # fork is unsafe once OpenMP is up
        with concurrent.futures.ProcessPoolExecutor(max_workers=processes, mp_context=ctx) as pool:
            return list(pool.map(_ensemble_worker, jobs))
    return [_ensemble_worker(j) for j in jobs]


def run_ensemble(
    layout: ParityLayout,
    depth: int,
    noise_levels,
    runs_per_level: int,
    seed: int,
    e_min: float,
    e_max: float,
    p1: float = 5e-4,
    updates: int = 200,
    shots: int = 500,
    final_shots: int = 5000,
    unraveling: str = "pauli",
    proposal_scale: float = 0.1,
    processes: int = 1,
) -> list[EnsembleLevel]:
    """Independent optimization runs per four-body noise level.

    Returns per level the residual energies of the final (post-optimization)
    estimates together with median and quartiles. Seeds derive from
    (seed, level index, run index), so results are reproducible and
    independent of how runs are scheduled; ``processes`` > 1 farms runs out
    to worker processes with bit-identical aggregates.
    """
    if runs_per_level < 2:
        raise InputError("runs_per_level must be >= 2")
    out = []
    for li, p4 in enumerate(noise_levels):
        runs = optimize_runs(
            layout,
            depth,
            NoiseModel(p1=p1, p4=float(p4)),
            runs_per_level,
            seed,
            updates=updates,
            shots=shots,
            final_shots=final_shots,
            unraveling=unraveling,
            proposal_scale=proposal_scale,
            processes=processes,
            level_index=li,
        )
        residuals = [residual_energy(r.final_energy, e_min, e_max) for r in runs]
        arr = np.asarray(residuals)
        out.append(
            EnsembleLevel(
                p4=float(p4),
                residuals=residuals,
                median=float(np.median(arr)),
                q25=float(np.percentile(arr, 25)),
                q75=float(np.percentile(arr, 75)),
            )
        )
    return out
