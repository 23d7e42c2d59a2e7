"""Parity encoding of combinatorial optimization problems.

Maps a logical problem (hypergraph with couplings) onto a grid of physical
parity qubits, each carrying the product of a subset of logical spins as a
local field, with plaquette constraints restoring the logical code space.
Provides energy evaluation, exhaustive extrema, readout decoding, and the
plaquette illumination schedule.

Energy convention: E(z) = sum_v J_v z_v - c * sum_P prod_{k in P} z_k.
A satisfied plaquette (product +1) lowers the energy by c.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

_EXTREMA_MAX_QUBITS = 26
_ENUM_CHUNK_BITS = 18


@dataclass(frozen=True)
class LogicalProblem:
    """A spin problem: terms (support, coupling) over num_logical spins."""

    num_logical: int
    terms: tuple[tuple[tuple[int, ...], float], ...]

    def __post_init__(self):
        if self.num_logical < 1:
            raise InputError("num_logical must be >= 1")
        if len(self.terms) < 1:
            raise InputError("problem needs at least one term")
        seen = set()
        norm = []
        for support, coupling in self.terms:
            s = tuple(sorted(set(support)))
            if len(s) < 1:
                raise InputError("empty term support")
            if s != tuple(support):
                raise InputError(f"support {support} must be sorted and duplicate-free")
            if s[-1] >= self.num_logical or s[0] < 0:
                raise InputError(f"support {support} out of range for N={self.num_logical}")
            if s in seen:
                raise InputError(f"duplicate support {s}")
            seen.add(s)
            norm.append((s, float(coupling)))
        object.__setattr__(self, "terms", tuple(norm))

    @property
    def num_terms(self) -> int:
        return len(self.terms)

    def to_dict(self) -> dict:
        return {
            "num_logical": self.num_logical,
            "terms": [{"support": list(s), "coupling": c} for s, c in self.terms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogicalProblem":
        try:
            terms = tuple(
                (tuple(t["support"]), float(t["coupling"])) for t in d["terms"]
            )
            return cls(num_logical=int(d["num_logical"]), terms=terms)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed problem record: {exc}") from exc


@dataclass(frozen=True)
class Qubit:
    """One physical parity qubit: grid position, logical support, local field."""

    id: int
    row: int
    col: int
    logical_support: tuple[int, ...]
    local_field: float


@dataclass(frozen=True)
class Plaquette:
    """A 3- or 4-body constraint over geometrically contiguous qubits."""

    id: int
    members: tuple[int, ...]

    def __post_init__(self):
        if len(self.members) not in (3, 4):
            raise InputError(f"plaquette {self.id} must have 3 or 4 members")


@dataclass(frozen=True)
class ParityLayout:
    """Physical layout: qubits on a grid plus plaquette constraints.

    ``penalty_strength`` is the constraint coefficient c in the energy.
    The paper leaves c open; the default used by builders is
    sum(|J_v|) + 1, which guarantees constraint-satisfying ground states.
    """

    grid_rows: int
    grid_cols: int
    qubits: tuple[Qubit, ...]
    plaquettes: tuple[Plaquette, ...]
    penalty_strength: float = field(default=0.0)

    def __post_init__(self):
        if self.penalty_strength < 0:
            raise InputError("penalty_strength must be >= 0")
        ids = [q.id for q in self.qubits]
        if ids != list(range(len(self.qubits))):
            raise InputError("qubit ids must be 0..K-1 in order")
        for q in self.qubits:
            if not (0 <= q.row < self.grid_rows and 0 <= q.col < self.grid_cols):
                raise InputError(f"qubit {q.id} off-grid")
        for p in self.plaquettes:
            for m in p.members:
                if not (0 <= m < len(self.qubits)):
                    raise InputError(f"plaquette {p.id} references unknown qubit {m}")

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    def local_fields(self) -> np.ndarray:
        return np.array([q.local_field for q in self.qubits], dtype=float)

    def plaquette_members(self) -> list[tuple[int, ...]]:
        return [p.members for p in self.plaquettes]

    def to_dict(self) -> dict:
        return {
            "grid_rows": self.grid_rows,
            "grid_cols": self.grid_cols,
            "penalty_strength": self.penalty_strength,
            "qubits": [
                {
                    "id": q.id,
                    "row": q.row,
                    "col": q.col,
                    "logical_support": list(q.logical_support),
                    "local_field": q.local_field,
                }
                for q in self.qubits
            ],
            "plaquettes": [
                {"id": p.id, "members": list(p.members)} for p in self.plaquettes
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParityLayout":
        try:
            qubits = tuple(
                Qubit(
                    id=int(q["id"]),
                    row=int(q["row"]),
                    col=int(q["col"]),
                    logical_support=tuple(int(i) for i in q["logical_support"]),
                    local_field=float(q["local_field"]),
                )
                for q in d["qubits"]
            )
            plaquettes = tuple(
                Plaquette(id=int(p["id"]), members=tuple(int(m) for m in p["members"]))
                for p in d["plaquettes"]
            )
            return cls(
                grid_rows=int(d["grid_rows"]),
                grid_cols=int(d["grid_cols"]),
                qubits=qubits,
                plaquettes=plaquettes,
                penalty_strength=float(d["penalty_strength"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed layout record: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "ParityLayout":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(d)


def default_penalty(fields) -> float:
    """c = sum(|J_v|) + 1: strong enough that every ground state satisfies all constraints."""
    return float(np.sum(np.abs(np.asarray(fields, dtype=float)))) + 1.0


def encode_complete_bipartite(n_a: int, n_b: int, couplings, penalty_strength: float | None = None) -> ParityLayout:
    """Encode a complete bipartite problem on an n_a x n_b grid.

    Qubit at (a, b) represents the product of logical spins a and n_a + b and
    carries local field couplings[a][b]. Constraints are all 2x2 cells.
    """
    if n_a < 2 or n_b < 2:
        raise InputError("bipartite encoding needs n_a, n_b >= 2")
    J = np.asarray(couplings, dtype=float)
    if J.shape != (n_a, n_b):
        raise InputError(f"couplings shape {J.shape} does not match ({n_a}, {n_b})")
    qubits = []
    for a in range(n_a):
        for b in range(n_b):
            qubits.append(
                Qubit(
                    id=a * n_b + b,
                    row=a,
                    col=b,
                    logical_support=(a, n_a + b),
                    local_field=float(J[a, b]),
                )
            )
    plaquettes = []
    pid = 0
    for a in range(n_a - 1):
        for b in range(n_b - 1):
            members = (
                a * n_b + b,
                a * n_b + b + 1,
                (a + 1) * n_b + b,
                (a + 1) * n_b + b + 1,
            )
            plaquettes.append(Plaquette(id=pid, members=members))
            pid += 1
    if penalty_strength is None:
        penalty_strength = default_penalty(J)
    return ParityLayout(
        grid_rows=n_a,
        grid_cols=n_b,
        qubits=tuple(qubits),
        plaquettes=tuple(plaquettes),
        penalty_strength=float(penalty_strength),
    )


@dataclass(frozen=True)
class Violation:
    """One failed layout check, naming the plaquette and what is wrong."""

    plaquette_id: int
    kind: str
    detail: str
    odd_indices: tuple[int, ...] = ()


def validate_layout(layout: ParityLayout) -> list[Violation]:
    """Check every plaquette for even logical multiplicity and grid contiguity.

    Returns an empty list for a valid layout; never raises.
    """
    reports = []
    for p in layout.plaquettes:
        counts: dict[int, int] = {}
        for m in p.members:
            for i in layout.qubits[m].logical_support:
                counts[i] = counts.get(i, 0) + 1
        odd = tuple(sorted(i for i, n in counts.items() if n % 2 == 1))
        if odd:
            reports.append(
                Violation(
                    plaquette_id=p.id,
                    kind="odd-multiplicity",
                    detail=f"logical indices {list(odd)} appear an odd number of times",
                    odd_indices=odd,
                )
            )
        rows = [layout.qubits[m].row for m in p.members]
        cols = [layout.qubits[m].col for m in p.members]
        if max(rows) - min(rows) > 1 or max(cols) - min(cols) > 1:
            reports.append(
                Violation(
                    plaquette_id=p.id,
                    kind="non-contiguous",
                    detail="members are not contained in a 2x2 grid cell",
                )
            )
        else:
            cells = {(layout.qubits[m].row, layout.qubits[m].col) for m in p.members}
            if len(cells) != len(p.members):
                reports.append(
                    Violation(
                        plaquette_id=p.id,
                        kind="non-contiguous",
                        detail="members share grid positions",
                    )
                )
    return reports


def _as_config(config, num_qubits: int) -> np.ndarray:
    z = np.asarray(config, dtype=int)
    if z.shape != (num_qubits,):
        raise InputError(f"configuration length {z.shape} does not match K={num_qubits}")
    if not np.all(np.abs(z) == 1):
        raise InputError("configuration values must be +1 or -1")
    return z


def parity_energy(config, layout: ParityLayout) -> float:
    """E(z) = sum J_v z_v - c * sum_P prod z; c = layout.penalty_strength."""
    z = _as_config(config, layout.num_qubits)
    e = float(np.dot(layout.local_fields(), z))
    c = layout.penalty_strength
    for p in layout.plaquettes:
        e -= c * float(np.prod(z[list(p.members)]))
    return e


def _chunk_energies(layout: ParityLayout, start: int, count: int) -> np.ndarray:
    """Energies of configurations start..start+count-1 (bit i of the index = qubit i; bit set -> z=-1)."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    e = np.zeros(count, dtype=float)
    fields = layout.local_fields()
    for v in range(layout.num_qubits):
        bit = ((idx >> np.uint64(v)) & np.uint64(1)).astype(np.int64)
        e += fields[v] * (1 - 2 * bit)
    c = layout.penalty_strength
    for p in layout.plaquettes:
        par = np.zeros(count, dtype=np.uint64)
        for m in p.members:
            par ^= (idx >> np.uint64(m)) & np.uint64(1)
        e -= c * (1 - 2 * par.astype(np.int64))
    return e


def config_from_index(index: int, num_qubits: int) -> np.ndarray:
    """Spin vector for an enumeration index (bit set -> z=-1)."""
    return np.array(
        [1 - 2 * ((index >> v) & 1) for v in range(num_qubits)], dtype=int
    )


def enumerate_extrema(layout: ParityLayout) -> tuple[float, float, np.ndarray]:
    """Exact (E_min, E_max, argmin) over all 2^K configurations.

    Guarded at K <= 26; the search is chunked so memory stays flat and the
    reduction is order-independent.
    """
    K = layout.num_qubits
    if K > _EXTREMA_MAX_QUBITS:
        raise InputError(f"K={K} too large for exhaustive enumeration (max {_EXTREMA_MAX_QUBITS})")
    total = 1 << K
    chunk = min(total, 1 << _ENUM_CHUNK_BITS)
    e_min = np.inf
    e_max = -np.inf
    argmin = 0
    for start in range(0, total, chunk):
        n = min(chunk, total - start)
        e = _chunk_energies(layout, start, n)
        i = int(np.argmin(e))
        if e[i] < e_min:
            e_min = float(e[i])
            argmin = start + i
        m = float(np.max(e))
        if m > e_max:
            e_max = m
    return e_min, e_max, config_from_index(argmin, K)


@dataclass(frozen=True)
class DecodeResult:
    """Either logical spins (success) or the violated plaquettes (failure)."""

    ok: bool
    logical: np.ndarray | None = None
    violated_plaquettes: tuple[int, ...] = ()
    reason: str = ""


def check_constraints(config, layout: ParityLayout) -> tuple[int, ...]:
    """Ids of plaquettes whose spin product is -1."""
    z = _as_config(config, layout.num_qubits)
    bad = []
    for p in layout.plaquettes:
        if np.prod(z[list(p.members)]) < 0:
            bad.append(p.id)
    return tuple(bad)


def _logical_components(layout: ParityLayout, num_logical: int) -> list[int]:
    """Union-find over logical indices co-appearing in any qubit support."""
    parent = list(range(num_logical))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for q in layout.qubits:
        s = q.logical_support
        for j in s[1:]:
            a, b = find(s[0]), find(j)
            if a != b:
                parent[b] = a
    return [find(i) for i in range(num_logical)]


def decode(config, layout: ParityLayout, num_logical: int | None = None) -> DecodeResult:
    """Recover logical spins s with z_v = prod_{i in support(v)} s_i.

    Works over GF(2): each qubit gives a linear equation on the logical sign
    bits. One spin per connected component of the logical graph is gauge;
    the lowest index in each component is fixed to +1.
    """
    z = _as_config(config, layout.num_qubits)
    violated = check_constraints(z, layout)
    if violated:
        return DecodeResult(
            ok=False,
            violated_plaquettes=violated,
            reason=f"constraints violated on plaquettes {list(violated)}",
        )
    if num_logical is None:
        num_logical = 1 + max(max(q.logical_support) for q in layout.qubits)

    comp = _logical_components(layout, num_logical)
    roots = {}
    for i in range(num_logical):
        roots.setdefault(comp[i], i)  # lowest index per component (gauge = +1)

    # Row-reduce the GF(2) system A s = b, with gauge spins eliminated first.
    rows = []
    for q in layout.qubits:
        mask = 0
        for i in q.logical_support:
            if i != roots[comp[i]]:
                mask |= 1 << i
        b = 1 if z[q.id] < 0 else 0
        rows.append((mask, b))

    pivot_of_bit: dict[int, tuple[int, int]] = {}
    for mask, b in rows:
        for bit, (pmask, pb) in pivot_of_bit.items():
            if (mask >> bit) & 1:
                mask ^= pmask
                b ^= pb
        if mask == 0:
            if b != 0:
                return DecodeResult(
                    ok=False,
                    reason="inconsistent parity system despite satisfied plaquettes",
                )
            continue
        low = (mask & -mask).bit_length() - 1
        pivot_of_bit[low] = (mask, b)

    s_bits = [0] * num_logical
    for bit in sorted(pivot_of_bit, reverse=True):
        mask, b = pivot_of_bit[bit]
        val = b
        m = mask & ~(1 << bit)
        while m:
            j = (m & -m).bit_length() - 1
            val ^= s_bits[j]
            m &= m - 1
        s_bits[bit] = val

    s = np.array([1 - 2 * s_bits[i] for i in range(num_logical)], dtype=int)
    # Verify every qubit parity (free variables beyond plaquette closure could
    # otherwise slip through unnoticed).
    for q in layout.qubits:
        if np.prod(s[list(q.logical_support)]) != z[q.id]:
            return DecodeResult(ok=False, reason=f"parity mismatch at qubit {q.id}")
    return DecodeResult(ok=True, logical=s)


def encode_logical(logical, layout: ParityLayout) -> np.ndarray:
    """Physical configuration induced by logical spins: z_v = prod s_i."""
    s = np.asarray(logical, dtype=int)
    return np.array(
        [int(np.prod(s[list(q.logical_support)])) for q in layout.qubits], dtype=int
    )


def schedule_illumination(layout: ParityLayout) -> list[tuple[int, ...]]:
    """Group plaquettes into at most 9 crosstalk-free illumination rounds.

    Plaquette cell coordinates are the (min row, min col) of the members;
    round id is 3*(row mod 3) + (col mod 3). Within a round no two plaquettes
    share an atom or sit in adjacent cells (Chebyshev distance <= 1).
    """
    cells = []
    for p in layout.plaquettes:
        rows = [layout.qubits[m].row for m in p.members]
        cols = [layout.qubits[m].col for m in p.members]
        if max(rows) - min(rows) > 1 or max(cols) - min(cols) > 1:
            raise InputError(f"plaquette {p.id} is not a 2x2 grid cell")
        cells.append((min(rows), min(cols)))
    rounds: dict[int, list[int]] = {}
    for p, (r, c) in zip(layout.plaquettes, cells):
        rounds.setdefault(3 * (r % 3) + (c % 3), []).append(p.id)
    return [tuple(rounds[k]) for k in sorted(rounds)]


def random_bipartite_problem(n_a: int, n_b: int, rng: np.random.Generator) -> LogicalProblem:
    """Complete bipartite problem with couplings drawn uniformly from {-1, +1}."""
    terms = []
    for a in range(n_a):
        for b in range(n_b):
            terms.append(((a, n_a + b), float(rng.choice((-1.0, 1.0)))))
    return LogicalProblem(num_logical=n_a + n_b, terms=tuple(terms))


def bipartite_parts(problem: LogicalProblem) -> tuple[list[int], list[int]]:
    """Two-color the interaction graph; raise if not complete bipartite."""
    if any(len(s) != 2 for s, _ in problem.terms):
        raise InputError("problem has terms of order != 2; not a bipartite graph")
    color = {}
    adj: dict[int, set[int]] = {}
    for (i, j), _ in problem.terms:
        adj.setdefault(i, set()).add(j)
        adj.setdefault(j, set()).add(i)
    for start in sorted(adj):
        if start in color:
            continue
        color[start] = 0
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in color:
                    color[v] = 1 - color[u]
                    stack.append(v)
                elif color[v] == color[u]:
                    raise InputError("interaction graph is not bipartite")
    part_a = sorted(i for i, c in color.items() if c == 0)
    part_b = sorted(i for i, c in color.items() if c == 1)
    have = {s for s, _ in problem.terms}
    need = {tuple(sorted((i, j))) for i, j in itertools.product(part_a, part_b)}
    if have != need:
        raise InputError("interaction graph is bipartite but not complete bipartite")
    return part_a, part_b


def encode_problem(problem: LogicalProblem, penalty_strength: float | None = None) -> ParityLayout:
    """Encode a complete bipartite problem; other graphs need a hand-built layout."""
    part_a, part_b = bipartite_parts(problem)
    n_a, n_b = len(part_a), len(part_b)
    pos_a = {v: k for k, v in enumerate(part_a)}
    pos_b = {v: k for k, v in enumerate(part_b)}
    J = np.zeros((n_a, n_b))
    for (i, j), coupling in problem.terms:
        if i in pos_a:
            J[pos_a[i], pos_b[j]] = coupling
        else:
            J[pos_a[j], pos_b[i]] = coupling
    return encode_complete_bipartite(n_a, n_b, J, penalty_strength=penalty_strength)
