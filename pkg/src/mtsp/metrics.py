"""Simulation-derived metrics and the exhaustive constraint verifier.

Metrics over a finished run: theta (distinct genome types used), object size,
kappa (maximum overlap between the object and the target shape over all
translations and model rotations), alpha (count of alternative used types per
accretion step on a replay of the trace), the genome's active region, and the
bond totals B / B*.

The verifier enumerates every accretion sequence of a tile set on an unbounded
lattice, breadth first with memoization on translation-normalized
configurations, and decides the three solution constraints:

* C1 (termination): no sequence grows past the size bound;
* C2 (unicity): every maximal object has the target's shape, up to the
  model's rotations;
* C3 (fullness): every maximal object realizes the maximum bond count B*.

The verifier applies plain admissibility with no hollow bookkeeping: a tile
fits where its bonds reach tau outright.  Order-dependent discounts would
break configuration memoization, and any placement they would allow is reached
here anyway through the reordered sequence that motivates them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import (
    WILDCARD,
    CELL_ROTATIONS,
    ORIENTATIONS,
    LabelTable,
    ModelKind,
    Seed,
    Tile,
    canonical_tile,
    labels_bind,
    opposite,
    orient_tile,
    profile_admissible,
    rotate_cell,
)
from .simulator import GrowthState, Trace, TraceStep, format_trace


# --------------------------------------------------------------------------
# Target shapes


@dataclass(frozen=True)
class Shape:
    """Translation-normalized cell set of the target object omega*."""

    cells: tuple[tuple[int, ...], ...]
    n: int | None = None  # side length when square/cube

    def __post_init__(self) -> None:
        if not self.cells:
            raise ValueError("shape must be nonempty")
        dims = len(self.cells[0])
        if any(len(c) != dims for c in self.cells):
            raise ValueError("mixed cell dimensionalities")
        if len(set(self.cells)) != len(self.cells):
            raise ValueError("duplicate cells")
        lo = tuple(min(c[i] for c in self.cells) for i in range(dims))
        if any(x != 0 for x in lo):
            raise ValueError("shape cells must be normalized to min corner 0")
        if not _cells_connected(set(self.cells)):
            raise ValueError("shape must be face-connected")

    @property
    def dims(self) -> int:
        return len(self.cells[0])

    @property
    def size(self) -> int:
        return len(self.cells)

    @staticmethod
    def square(n: int) -> "Shape":
        if n < 1:
            raise ValueError("side length must be >= 1")
        return Shape(tuple((x, y) for x in range(n) for y in range(n)), n)

    @staticmethod
    def cube(n: int) -> "Shape":
        if n < 1:
            raise ValueError("side length must be >= 1")
        return Shape(tuple((x, y, z) for x in range(n) for y in range(n)
                           for z in range(n)), n)

    @staticmethod
    def from_cells(cells) -> "Shape":
        return Shape(normalize_cells(cells))


def normalize_cells(cells) -> tuple[tuple[int, ...], ...]:
    """Translate so every axis starts at 0; sort for a canonical tuple."""
    cells = [tuple(c) for c in cells]
    if not cells:
        raise ValueError("empty cell set")
    dims = len(cells[0])
    lo = tuple(min(c[i] for c in cells) for i in range(dims))
    return tuple(sorted(tuple(x - l for x, l in zip(c, lo)) for c in cells))


def _cells_connected(cells: set) -> bool:
    dims = len(next(iter(cells)))
    offsets = ModelKind.THREE_DR.offsets() if dims == 3 else ModelKind.TWO_D.offsets()
    start = next(iter(cells))
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for off in offsets:
            nxt = tuple(c + o for c, o in zip(cur, off))
            if nxt in cells and nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(cells)


def canonical_shape(cells, m: ModelKind) -> tuple[tuple[int, ...], ...]:
    """Rotation-and-translation canonical form of a cell set under model m."""
    best = None
    for mat in CELL_ROTATIONS[m]:
        cand = normalize_cells([rotate_cell(c, mat) for c in cells])
        if best is None or cand < best:
            best = cand
    return best


def same_shape(cells, shape: Shape, m: ModelKind) -> bool:
    if not cells or len(next(iter(cells))) != shape.dims:
        return False
    return canonical_shape(cells, m) == canonical_shape(shape.cells, m)


# --------------------------------------------------------------------------
# kappa and bonds


def kappa(omega_cells, shape: Shape, m: ModelKind) -> int:
    """Maximum cells in common over all superpositions of the object on the
    target: every translation composed with every model rotation.

    A translation t contributes one overlapping cell per (i, j) pair with
    rotated[i] + t == target[j], so the best overlap for a given rotation is
    the highest multiplicity among the pairwise difference vectors.
    """
    cells = [tuple(c) for c in omega_cells]
    if not cells:
        raise ValueError("kappa of an empty object")
    if len(cells[0]) != shape.dims:
        raise ValueError("object/target dimensionality mismatch")
    tgt = np.asarray(shape.cells, dtype=np.int64)
    best = 1
    for mat in CELL_ROTATIONS[m]:
        rot = np.asarray([rotate_cell(c, mat) for c in cells], dtype=np.int64)
        diffs = (tgt[None, :, :] - rot[:, None, :]).reshape(-1, shape.dims)
        _, counts = np.unique(diffs, axis=0, return_counts=True)
        best = max(best, int(counts.max()))
    return best


def kappa_bruteforce(omega_cells, shape: Shape, m: ModelKind) -> int:
    """Reference implementation: explicit loop over translations."""
    cells = [tuple(c) for c in omega_cells]
    target = set(shape.cells)
    best = 0
    for mat in CELL_ROTATIONS[m]:
        rot = [rotate_cell(c, mat) for c in cells]
        for a in rot:
            for b in shape.cells:
                t = tuple(x - y for x, y in zip(b, a))
                n = sum(1 for c in rot if tuple(x + y for x, y in zip(c, t)) in target)
                best = max(best, n)
    return best


def max_bonds(shape: Shape) -> int:
    """Face-adjacent cell pairs within the shape: the bond ceiling B*."""
    return count_adjacent_pairs(shape.cells)


def count_adjacent_pairs(cells) -> int:
    cset = {tuple(c) for c in cells}
    dims = len(next(iter(cset)))
    pos_dirs = [(1, 0), (0, 1)] if dims == 2 else [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    n = 0
    for c in cset:
        for off in pos_dirs:
            if tuple(x + o for x, o in zip(c, off)) in cset:
                n += 1
    return n


def count_bonds(occupancy: dict, m: ModelKind) -> int:
    """Bonds among placed tiles keyed by (possibly unwrapped) position."""
    offsets = m.offsets()
    pos_dirs = [0, 1] if m.dims == 2 else [0, 1, 4]  # N, E, U: each pair once
    n = 0
    for pos, tile in occupancy.items():
        for d in pos_dirs:
            npos = tuple(p + o for p, o in zip(pos, offsets[d]))
            other = occupancy.get(npos)
            if other is not None and labels_bind(tile[d], other[opposite(d)], m):
                n += 1
    return n


# --------------------------------------------------------------------------
# active region, theta


def active_region(used_flags) -> tuple[int, int]:
    """[leftmost used index, rightmost used index]; the whole genome when
    nothing was used, so crossover cuts stay well-defined."""
    idx = [j for j, f in enumerate(used_flags) if f]
    if not idx:
        return 0, len(used_flags) - 1
    return idx[0], idx[-1]


def used_flags(genome_len: int, used: tuple[int, ...]) -> tuple[bool, ...]:
    s = set(used)
    return tuple(j in s for j in range(genome_len))


# --------------------------------------------------------------------------
# alpha


def alpha(trace: Trace, genome: tuple[Tile, ...], seed_final: Seed,
          table: LabelTable, m: ModelKind, tau: int,
          all_positions: bool = False) -> int:
    """Alternative-type count accumulated over a replay of the trace.

    The trace is replayed from the finalized seed.  At each step, over the
    types used anywhere in the trace, a type counts as an alternative when it
    differs from the step's type, is not rotation-equivalent to it, and has
    some orientation admissible at the step's position in the state just
    before the step.  `all_positions` widens the test to every open position
    (a strict variant; the default confines it to the step's own position).
    """
    if not trace.steps:
        raise ValueError("alpha is undefined for a seed-only object (theta = 0)")
    state = GrowthState(genome, seed_final, table, m, tau, trace.extent,
                        max_tiles=len(trace.steps) + len(seed_final.cells))
    used = sorted({s.type_idx for s in trace.steps})
    canon = {j: canonical_tile(genome[j], m) for j in used}
    rho = m.orientation_count
    total = 0
    for s in trace.steps:
        if all_positions:
            kset = {k for cands in state.entries.values() for k, _ in cands}
        else:
            kset = {k for k, _ in state.entries.get(s.pos, ())}
        for j in used:
            if j == s.type_idx or canon[j] == canon[s.type_idx]:
                continue
            if any(j * rho + o in kset for o in range(rho)):
                total += 1
        state.place(s.pos, s.type_idx * rho + s.orient_idx)
    return total


# --------------------------------------------------------------------------
# Combined report


@dataclass(frozen=True)
class MetricsReport:
    theta: int
    size: int
    kappa: int
    alpha: int
    active: tuple[int, int]
    b_final: int
    b_star: int
    fullness: bool


def evaluate_outcome(outcome, genome: tuple[Tile, ...], shape: Shape,
                     table: LabelTable, m: ModelKind, tau: int) -> MetricsReport:
    """All metrics for one simulation outcome."""
    theta = len(outcome.used)
    k = kappa(outcome.cells, shape, m)
    a = alpha(outcome.trace, genome, outcome.seed_final, table, m, tau) if theta else 0
    region = active_region(used_flags(len(genome), outcome.used))
    b_star = max_bonds(shape)
    return MetricsReport(
        theta=theta,
        size=outcome.size,
        kappa=k,
        alpha=a,
        active=region,
        b_final=outcome.bonds,
        b_star=b_star,
        fullness=outcome.bonds == b_star,
    )


# --------------------------------------------------------------------------
# Exhaustive verifier

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class VerifyResult:
    c1: str
    c2: str
    c3: str
    states: int
    maximal: int
    witness: Trace | None = None
    witness_kind: str | None = None  # which constraint the witness violates

    @property
    def all_pass(self) -> bool:
        return self.c1 == self.c2 == self.c3 == PASS

    @property
    def any_fail(self) -> bool:
        return FAIL in (self.c1, self.c2, self.c3)

    def report(self) -> str:
        lines = [
            f"C1={self.c1} termination within bound",
            f"C2={self.c2} every maximal object matches the target shape",
            f"C3={self.c3} every maximal object reaches B*",
            f"states={self.states} maximal={self.maximal}",
        ]
        if self.witness is not None:
            lines.append(f"witness ({self.witness_kind}):")
            lines.append(format_trace(self.witness).rstrip("\n"))
        return "\n".join(lines) + "\n"


class _State:
    __slots__ = ("occ", "parent", "step")

    def __init__(self, occ, parent, step):
        self.occ = occ          # pos -> side tuple
        self.parent = parent    # _State or None
        self.step = step        # (pos, type_idx, orient_idx, bonds, total) or None


def _canon_key(occ: dict) -> tuple:
    dims = len(next(iter(occ)))
    lo = tuple(min(p[i] for p in occ) for i in range(dims))
    return tuple(sorted((tuple(x - l for x, l in zip(p, lo)), t)
                        for p, t in occ.items()))


def _witness(st: _State, extent_hint: int) -> Trace:
    steps = []
    chain = []
    while st.parent is not None:
        chain.append(st.step)
        st = st.parent
    chain.reverse()
    for u, (pos, t, o, nb, total) in enumerate(chain, 1):
        steps.append(TraceStep(u, pos, t, o, nb, total, 0))
    return Trace(tuple(steps), extent_hint)


def exhaustive_verify(genome: tuple[Tile, ...], seed: Seed, shape: Shape,
                      table: LabelTable, m: ModelKind, tau: int,
                      bound: int | None = None,
                      state_budget: int = 2_000_000) -> VerifyResult:
    """Decide C1/C2/C3 by enumerating all accretion sequences.

    Works on an unbounded lattice (no wrap, no collisions).  `bound` caps the
    object size C1 is tested against; any state that can still grow at the
    bound fails C1.  A state count above `state_budget` makes every constraint
    without a witnessed violation INCONCLUSIVE.

    The seed must be concrete: wildcard sides are rejected, since a wildcard
    becomes part of the answer only after a simulation run has bound it.
    """
    if bound is None:
        bound = shape.size
    if bound < shape.size:
        raise ValueError("bound must be at least the target size")
    for _, tile in seed.cells:
        if WILDCARD in tile:
            raise ValueError("verifier needs a finalized (wildcard-free) seed")
    if seed.model is not m:
        raise ValueError("seed model does not match")

    oriented = []
    for t in genome:
        if len(t) != m.n_sides:
            raise ValueError("tile side count does not match model")
        for perm in ORIENTATIONS[m]:
            oriented.append(orient_tile(t, perm))
    rho = m.orientation_count
    sigma = m.n_sides
    offsets = m.offsets()
    intens = table.intensities

    # dedupe identical oriented side-tuples: same codes, same behavior
    orient_of: dict[Tile, int] = {}
    distinct: list[tuple[Tile, int]] = []
    for k, t in enumerate(oriented):
        if t not in orient_of:
            orient_of[t] = k
            distinct.append((t, k))

    target_canon = canonical_shape(shape.cells, m)
    b_star = max_bonds(shape)

    root_occ = {pos: tile for pos, tile in seed.cells}
    root = _State(root_occ, None, None)
    seen = {_canon_key(root_occ)}
    queue = deque([root])
    states = 1
    maximal = 0
    c1 = c2 = c3 = PASS
    witness = None
    witness_kind = None
    budget_hit = False

    def expansions(st: _State):
        occ = st.occ
        frontier = set()
        for pos in occ:
            for off in offsets:
                npos = tuple(p + o for p, o in zip(pos, off))
                if npos not in occ:
                    frontier.add(npos)
        out = []
        for pos in sorted(frontier):
            profile = []
            for d in range(sigma):
                off = offsets[d]
                npos = tuple(p + o for p, o in zip(pos, off))
                t = occ.get(npos)
                profile.append(None if t is None else t[opposite(d)])
            for t, k in distinct:
                ok, w = profile_admissible(t, profile, None, tau, m.rotational, intens)
                if ok:
                    nb = sum(1 for d in range(sigma)
                             if profile[d] is not None
                             and labels_bind(t[d], profile[d], m))
                    out.append((pos, k, t, nb, w))
        return out

    while queue:
        st = queue.popleft()
        moves = expansions(st)
        if not moves:
            maximal += 1
            cells = list(st.occ)
            if canonical_shape(cells, m) != target_canon:
                if c2 == PASS:
                    c2 = FAIL
                    if witness is None:
                        witness = _witness(st, bound)
                        witness_kind = "C2"
                continue
            b = count_bonds(st.occ, m)
            if b < b_star and c3 == PASS:
                c3 = FAIL
                if witness is None:
                    witness = _witness(st, bound)
                    witness_kind = "C3"
            continue
        if len(st.occ) >= bound:
            # can still grow past the bound
            c1 = FAIL
            pos, k, t, nb, w = moves[0]
            ti, oi = divmod(k, rho)
            over = _State({**st.occ, pos: t}, st, (pos, ti, oi, nb, w))
            witness = _witness(over, bound)
            witness_kind = "C1"
            break
        for pos, k, t, nb, w in moves:
            occ2 = dict(st.occ)
            occ2[pos] = t
            key = _canon_key(occ2)
            if key in seen:
                continue
            seen.add(key)
            states += 1
            ti, oi = divmod(k, rho)
            queue.append(_State(occ2, st, (pos, ti, oi, nb, w)))
            if states > state_budget:
                budget_hit = True
                break
        if budget_hit:
            break

    if budget_hit:
        c1 = INCONCLUSIVE if c1 == PASS else c1
        c2 = INCONCLUSIVE if c2 == PASS else c2
        c3 = INCONCLUSIVE if c3 == PASS else c3
    elif c1 == FAIL:
        # exploration stopped early; unvisited states could hide violations
        c2 = INCONCLUSIVE if c2 == PASS else c2
        c3 = INCONCLUSIVE if c3 == PASS else c3
    return VerifyResult(c1, c2, c3, states, maximal, witness, witness_kind)
