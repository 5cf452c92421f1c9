"""Tile models for lattice self-assembly.

Three models are supported:

* ``2d``  -- square tiles on the plane, fixed orientation.  Two facing sides
  bond when they carry the same non-blank label.
* ``2dr`` -- square tiles that may appear in any of the 4 planar rotations.
  Labels carry a polarity; facing sides bond when the labels are equal and
  the polarities are opposite.
* ``3dr`` -- cubic tiles in any of the 24 proper rotations, same polarity
  rule as ``2dr``.

Sides are indexed N, E, S, W (plus Up, Down for cubes).  A side carries a
label code: ``EPS`` (blank), ``WILDCARD`` (seed-only "bind anything" marker),
or an integer encoding a (label id, polarity) pair.  Label intensities live in
a :class:`LabelTable`; a bond contributes its label's intensity to the
accretion strength test against the temperature ``tau``.

Orientations are represented as side permutations.  For each model the table
lists every permutation sorted lexicographically, identity first; orientation
indices in traces refer to this order.  The 3DR table is generated at import
from the 24 proper rotation matrices and is fixed (a frozen copy is asserted
in the tests).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

# Side indices.  2D models use the first four.
N, E, S, W, U, D = range(6)

SIDE_NAMES = ("N", "E", "S", "W", "U", "D")

# Unit vectors for each side direction, z pointing up.
DIR_VECS = (
    (0, 1, 0),   # N
    (1, 0, 0),   # E
    (0, -1, 0),  # S
    (-1, 0, 0),  # W
    (0, 0, 1),   # U
    (0, 0, -1),  # D
)


def opposite(d: int) -> int:
    """Index of the side facing side `d` on an adjacent tile."""
    return (d + 2) % 4 if d < 4 else 9 - d


class ModelKind(Enum):
    TWO_D = "2d"
    TWO_DR = "2dr"
    THREE_DR = "3dr"

    @property
    def dims(self) -> int:
        return 3 if self is ModelKind.THREE_DR else 2

    @property
    def n_sides(self) -> int:
        return 2 * self.dims

    @property
    def rotational(self) -> bool:
        return self is not ModelKind.TWO_D

    @property
    def orientation_count(self) -> int:
        return len(ORIENTATIONS[self])

    def offsets(self) -> tuple[tuple[int, ...], ...]:
        """Neighbor offsets by side index, as dims-length tuples."""
        return _OFFSETS[self.dims]


_OFFSETS = {
    2: tuple(v[:2] for v in DIR_VECS[:4]),
    3: DIR_VECS,
}


# --------------------------------------------------------------------------
# Label codes

EPS = 0
WILDCARD = 1

POL_NONE = 0
POL_PLUS = 1
POL_MINUS = 2

_POL_CHARS = {POL_PLUS: "+", POL_MINUS: "-"}


def side_code(label_id: int, pol: int) -> int:
    """Pack a label id (>= 1) and polarity into a side code."""
    if label_id < 1:
        raise ValueError(f"label id must be >= 1, got {label_id}")
    return label_id * 4 + pol


def code_id(code: int) -> int:
    return code >> 2


def code_pol(code: int) -> int:
    return code & 3


def labels_bind(a: int, b: int, m: ModelKind) -> bool:
    """True when two facing side codes create a bond under model `m`.

    EPS and WILDCARD codes never bind through this predicate; wildcard
    binding is a seed-side special case handled by the placement rule.
    """
    if a < 4 or b < 4:
        return False
    if (a >> 2) != (b >> 2):
        return False
    if m is ModelKind.TWO_D:
        return True
    return (a & 3) + (b & 3) == 3  # opposite polarities


def partner_code(code: int, m: ModelKind) -> int:
    """The side code that binds `code` under model `m`."""
    if code < 4:
        raise ValueError("EPS/WILDCARD have no binding partner")
    if m is ModelKind.TWO_D:
        return code
    return code ^ 3 if (code & 3) in (POL_PLUS, POL_MINUS) else code


# --------------------------------------------------------------------------
# Label table


@dataclass(frozen=True)
class LabelTable:
    """Label names and intensities.  Index 0 is the blank label eps.

    Generated tables cycle intensities 1..tau over the non-eps entries, so a
    table of size k*tau+1 offers k labels at every strength.  Hand-written
    tables (parsed from tile files) may use any positive intensities.
    """

    names: tuple[str, ...]
    intensities: tuple[int, ...]
    tau: int

    def __post_init__(self) -> None:
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if len(self.names) != len(self.intensities) or not self.names:
            raise ValueError("names and intensities must align and be non-empty")
        if self.names[0] != "eps" or self.intensities[0] != 0:
            raise ValueError("table entry 0 must be eps with intensity 0")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate label names")
        if any(i < 1 for i in self.intensities[1:]):
            raise ValueError("non-eps intensities must be positive")

    @property
    def size(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown label {name!r}") from None

    def intensity_of(self, code: int) -> int:
        """Intensity contributed by a bond on this side code (0 for EPS/WILDCARD)."""
        return self.intensities[code >> 2] if code >= 4 else 0

    def code(self, name: str, pol: int = POL_NONE) -> int:
        return side_code(self.id_of(name), pol)

    @staticmethod
    def from_pairs(pairs: list[tuple[str, int]], tau: int) -> "LabelTable":
        names = ["eps"]
        intens = [0]
        for name, i in pairs:
            names.append(name)
            intens.append(i)
        return LabelTable(tuple(names), tuple(intens), tau)


def build_label_table(size: int, tau: int) -> LabelTable:
    """Build a table of `size` entries: eps followed by size-1 labels whose
    intensities cycle 1, 2, ..., tau, 1, 2, ...

    size=7, tau=3 gives intensities (1, 2, 3, 1, 2, 3).
    """
    if size < 1:
        raise ValueError(f"table size must be >= 1, got {size}")
    names = ["eps"] + [f"l{j}" for j in range(1, size)]
    intens = [0] + [((j - 1) % tau) + 1 for j in range(1, size)]
    return LabelTable(tuple(names), tuple(intens), tau)


# --------------------------------------------------------------------------
# Orientations

Tile = tuple[int, ...]


def _rotation_matrices() -> list[tuple[tuple[int, ...], ...]]:
    """All 24 proper rotations of the cube, as integer 3x3 matrices."""
    def mul(a, b):
        return tuple(
            tuple(sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3))
            for i in range(3)
        )

    ident = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    rx = ((1, 0, 0), (0, 0, -1), (0, 1, 0))
    ry = ((0, 0, 1), (0, 1, 0), (-1, 0, 0))
    rz = ((0, -1, 0), (1, 0, 0), (0, 0, 1))
    seen = {ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for m in frontier:
            for g in (rx, ry, rz):
                p = mul(g, m)
                if p not in seen:
                    seen.add(p)
                    nxt.append(p)
        frontier = nxt
    assert len(seen) == 24
    return sorted(seen)


def _side_perm(mat: tuple[tuple[int, ...], ...], n_sides: int) -> tuple[int, ...]:
    # perm[dest] = src such that the rotation carries direction src onto dest;
    # applying a tile orientation is new[dest] = old[perm[dest]].
    def apply_t(v):
        return tuple(sum(mat[i][j] * v[i] for i in range(3)) for j in range(3))

    perm = []
    for dv in DIR_VECS[:n_sides]:
        perm.append(DIR_VECS.index(apply_t(dv)))
    return tuple(perm)


def _build_orientation_tables():
    mats24 = _rotation_matrices()
    pairs3 = sorted((_side_perm(m, 6), m) for m in mats24)
    perms3 = tuple(p for p, _ in pairs3)
    mats3 = tuple(m for _, m in pairs3)

    # z-axis rotations only, restricted to the four planar sides
    planar = [(p[:4], m) for p, m in pairs3 if m[2] == (0, 0, 1) and p[4] == 4]
    planar.sort()
    perms2 = tuple(p for p, _ in planar)
    mats2 = tuple(m for _, m in planar)
    assert len(perms2) == 4 and perms2[0] == (0, 1, 2, 3)
    assert perms3[0] == (0, 1, 2, 3, 4, 5)
    return perms2, mats2, perms3, mats3


_PERMS_2DR, _MATS_2DR, _PERMS_3DR, _MATS_3DR = _build_orientation_tables()

ORIENTATIONS: dict[ModelKind, tuple[tuple[int, ...], ...]] = {
    ModelKind.TWO_D: ((0, 1, 2, 3),),
    ModelKind.TWO_DR: _PERMS_2DR,
    ModelKind.THREE_DR: _PERMS_3DR,
}

# Object-space rotations matching ORIENTATIONS index for index, used when
# comparing whole shapes up to the model's rotation group.
CELL_ROTATIONS: dict[ModelKind, tuple[tuple[tuple[int, ...], ...], ...]] = {
    ModelKind.TWO_D: (((1, 0, 0), (0, 1, 0), (0, 0, 1)),),
    ModelKind.TWO_DR: _MATS_2DR,
    ModelKind.THREE_DR: _MATS_3DR,
}


def rotate_cell(cell: tuple[int, ...], mat) -> tuple[int, ...]:
    """Apply an object rotation matrix to a 2- or 3-vector cell."""
    v = (cell[0], cell[1], cell[2] if len(cell) == 3 else 0)
    out = tuple(sum(mat[i][j] * v[j] for j in range(3)) for i in range(3))
    return out if len(cell) == 3 else out[:2]


def orient_tile(t: Tile, perm: tuple[int, ...]) -> Tile:
    return tuple(t[p] for p in perm)


def enumerate_orientations(t: Tile, m: ModelKind) -> list[Tile]:
    """All oriented copies of `t`, one per orientation index.

    Duplicates are retained: a symmetric tile reachable through several
    rotations occupies several slots, and downstream candidate lists keep
    them as separate entries.
    """
    if len(t) != m.n_sides:
        raise ValueError(f"tile has {len(t)} sides, model {m.value} wants {m.n_sides}")
    return [orient_tile(t, p) for p in ORIENTATIONS[m]]


def canonical_tile(t: Tile, m: ModelKind) -> Tile:
    """Smallest oriented copy; equal canonical forms == rotation-equivalent."""
    return min(enumerate_orientations(t, m))


def rotation_equivalent(a: Tile, b: Tile, m: ModelKind) -> bool:
    return canonical_tile(a, m) == canonical_tile(b, m)


def labeled_side_count(t: Tile) -> int:
    return sum(1 for c in t if c >= 4)


# --------------------------------------------------------------------------
# Seeds


@dataclass(frozen=True)
class Seed:
    """Pre-assembled starting tiles, keyed by integer offset from the anchor.

    Wildcard sides may only face unoccupied offsets; they bind the first
    non-eps label that accretes against them and adopt that label (opposite
    polarity in the rotation models) when the seed is finalized.
    """

    cells: tuple[tuple[tuple[int, ...], Tile], ...]  # ((offset, tile), ...)
    model: ModelKind

    def __post_init__(self) -> None:
        if not self.cells:
            raise ValueError("seed needs at least one tile")
        occ = dict(self.cells)
        if len(occ) != len(self.cells):
            raise ValueError("duplicate seed offsets")
        offsets = self.model.offsets()
        for pos, tile in self.cells:
            if len(tile) != self.model.n_sides:
                raise ValueError("seed tile side count does not match model")
            for d, code in enumerate(tile):
                npos = tuple(p + o for p, o in zip(pos, offsets[d]))
                if code == WILDCARD and npos in occ:
                    raise ValueError(f"wildcard at {pos} side {SIDE_NAMES[d]} faces an occupied cell")
        if len(occ) > 1 and not _connected(set(occ), offsets):
            raise ValueError("seed cells must be face-connected")

    @property
    def positions(self) -> tuple[tuple[int, ...], ...]:
        return tuple(p for p, _ in self.cells)

    @staticmethod
    def simple(m: ModelKind) -> "Seed":
        """One tile, wildcards on N and E (and Up for cubes): corner seed."""
        sides = [EPS] * m.n_sides
        sides[N] = WILDCARD
        sides[E] = WILDCARD
        if m is ModelKind.THREE_DR:
            sides[U] = WILDCARD
        origin = (0,) * m.dims
        return Seed(((origin, tuple(sides)),), m)


def _connected(cells: set, offsets) -> bool:
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


def finalize_seed(seed: Seed, bindings: list[tuple[tuple[int, ...], int, int]]) -> Seed:
    """Concretize wildcards after a run.

    `bindings` holds (seed offset, side index, binder side code) records from
    the simulation; each bound wildcard becomes the code that binds its
    binder (same label, opposite polarity in rotation models).  Wildcards
    that never bound become EPS.
    """
    bound: dict[tuple[tuple[int, ...], int], int] = {}
    for pos, d, binder in bindings:
        bound[(pos, d)] = partner_code(binder, seed.model)
    out = []
    for pos, tile in seed.cells:
        sides = list(tile)
        for d, code in enumerate(sides):
            if code == WILDCARD:
                sides[d] = bound.get((pos, d), EPS)
        out.append((pos, tuple(sides)))
    return Seed(tuple(out), seed.model)


# --------------------------------------------------------------------------
# Placement rule


def profile_admissible(t: Tile, profile, closing_d: int | None, tau: int,
                       rotational: bool, intensities) -> tuple[bool, int]:
    """Accretion test against a neighbor profile.

    `profile[d]` is the side code presented toward the open position by the
    occupant of its d-neighbor, or None when that cell is empty.  Returns
    (admissible, bond_sum); bond_sum is the total intensity of every bond the
    placement would create and serves as the selection weight.

    Admissible when no facing pair of non-blank sides mismatches, at least
    one bond forms, at least one side stays unbound, and the bond intensities
    reach tau -- where a bond on side `closing_d` (the hollow-closing tile,
    if adjacent) is excluded from the tau test only.
    """
    n_bonds = 0
    total = 0
    closing_part = 0
    sigma = len(t)
    for d in range(sigma):
        fc = profile[d]
        if fc is None:
            continue
        mine = t[d]
        if fc == WILDCARD:
            if mine >= 4:
                n_bonds += 1
                w = intensities[mine >> 2]
                total += w
                if d == closing_d:
                    closing_part = w
            continue
        if mine < 4 or fc < 4:
            # a blank on either side: juxtaposed without bond, no veto
            continue
        if (mine >> 2) == (fc >> 2) and (not rotational or (mine & 3) + (fc & 3) == 3):
            n_bonds += 1
            w = intensities[mine >> 2]
            total += w
            if d == closing_d:
                closing_part = w
        else:
            return False, 0
    ok = n_bonds >= 1 and (total - closing_part) >= tau and n_bonds < sigma
    return ok, total


def placement_admissible(t: Tile, pos, state, tau: int, m: ModelKind) -> tuple[bool, int]:
    """State-based form of :func:`profile_admissible`.

    `state` provides facing_code(pos, d), closing_dir(pos) and a label table;
    the growth state in the simulator satisfies the protocol.
    """
    profile = [state.facing_code(pos, d) for d in range(m.n_sides)]
    return profile_admissible(t, profile, state.closing_dir(pos), tau,
                              m.rotational, state.table.intensities)


# --------------------------------------------------------------------------
# Tile-set text format

_SIDE_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*?)([+-]?)/(\d+)$")


class TileFormatError(ValueError):
    pass


@dataclass
class TileFile:
    """Parsed tile-set file: genome tiles by id plus optional seed lines."""

    tiles: list[tuple[int, Tile]]
    seeds: list[tuple[int, tuple[int, ...], Tile]]  # (id, offset, tile)
    labels: dict[str, int]  # name -> intensity
    model: ModelKind

    def label_table(self, tau: int) -> LabelTable:
        return LabelTable.from_pairs(sorted(self.labels.items()), tau)

    def seed(self) -> Seed | None:
        if not self.seeds:
            return None
        return Seed(tuple((off, t) for _, off, t in self.seeds), self.model)


def _parse_side(tok: str, m: ModelKind, labels: dict[str, int], lineno: int,
                allow_wild: bool) -> tuple[int, str | None]:
    if tok == "eps":
        return EPS, None
    if tok == "?":
        if not allow_wild:
            raise TileFormatError(f"line {lineno}: wildcard only allowed on seed tiles")
        return WILDCARD, None
    mm = _SIDE_RE.match(tok)
    if not mm:
        raise TileFormatError(f"line {lineno}: bad side {tok!r}")
    name, polc, intens = mm.group(1), mm.group(2), int(mm.group(3))
    if name == "eps":
        raise TileFormatError(f"line {lineno}: eps takes no intensity")
    if m.rotational and not polc:
        raise TileFormatError(f"line {lineno}: label {name!r} needs a polarity in model {m.value}")
    if not m.rotational and polc:
        raise TileFormatError(f"line {lineno}: polarity not allowed in model {m.value}")
    if intens < 1:
        raise TileFormatError(f"line {lineno}: intensity must be >= 1")
    if name in labels and labels[name] != intens:
        raise TileFormatError(f"line {lineno}: label {name!r} intensity {intens} "
                              f"conflicts with earlier {labels[name]}")
    labels.setdefault(name, intens)
    return name, polc  # resolved to a code once all labels are known


_TILE_LINE = re.compile(r"^(tile|seed)\s+(\d+)(?:@(-?\d+(?:,-?\d+){1,2}))?\s*:\s*(.*)$")


def parse_tiles(text: str, m: ModelKind) -> TileFile:
    """Parse the tile-set text format.

    Lines: ``tile <id>: N=<side> E=<side> S=<side> W=<side> [U=.. D=..]`` and
    ``seed <id>@<x>,<y>[,<z>]: ...``; a side is ``eps``, ``?`` (seed only) or
    ``<label><pol>/<intensity>`` with the polarity suffix present exactly in
    the rotation models.  ``#`` starts a comment.
    """
    labels: dict[str, int] = {}
    raw_tiles: list[tuple[int, list]] = []
    raw_seeds: list[tuple[int, tuple[int, ...], list]] = []
    want = [SIDE_NAMES[d] for d in range(m.n_sides)]
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        mm = _TILE_LINE.match(line)
        if not mm:
            raise TileFormatError(f"line {lineno}: cannot parse {line!r}")
        kind, ident, offs, rest = mm.groups()
        if kind == "seed":
            if offs is None:
                raise TileFormatError(f"line {lineno}: seed line needs @x,y offsets")
            off = tuple(int(x) for x in offs.split(","))
            if len(off) != m.dims:
                raise TileFormatError(f"line {lineno}: offset has {len(off)} coords, "
                                      f"model {m.value} wants {m.dims}")
        elif offs is not None:
            raise TileFormatError(f"line {lineno}: only seed lines take offsets")
        fields = rest.split()
        got = {}
        for f in fields:
            if "=" not in f:
                raise TileFormatError(f"line {lineno}: bad field {f!r}")
            k, v = f.split("=", 1)
            if k not in want:
                raise TileFormatError(f"line {lineno}: unknown side {k!r}")
            if k in got:
                raise TileFormatError(f"line {lineno}: duplicate side {k!r}")
            got[k] = _parse_side(v, m, labels, lineno, allow_wild=kind == "seed")
        if sorted(got) != sorted(want):
            raise TileFormatError(f"line {lineno}: sides {sorted(got)} != {sorted(want)}")
        sides = [got[SIDE_NAMES[d]] for d in range(m.n_sides)]
        if kind == "tile":
            raw_tiles.append((int(ident), sides))
        else:
            raw_seeds.append((int(ident), off, sides))

    table = LabelTable.from_pairs(sorted(labels.items()), tau=1)

    def resolve(sides: list) -> Tile:
        out = []
        for name, polc in sides:
            if isinstance(name, int):
                out.append(name)  # EPS or WILDCARD passed through as-is
            else:
                pol = POL_NONE if not polc else (POL_PLUS if polc == "+" else POL_MINUS)
                out.append(table.code(name, pol))
        return tuple(out)

    tiles = [(i, resolve(s)) for i, s in raw_tiles]
    seeds = [(i, off, resolve(s)) for i, off, s in raw_seeds]
    ids = [i for i, _ in tiles]
    if len(set(ids)) != len(ids):
        raise TileFormatError("duplicate tile ids")
    tiles.sort()
    seeds.sort()
    return TileFile(tiles, seeds, dict(sorted(labels.items())), m)


def format_side(code: int, table: LabelTable, m: ModelKind) -> str:
    if code == EPS:
        return "eps"
    if code == WILDCARD:
        return "?"
    name = table.names[code >> 2]
    pol = _POL_CHARS.get(code & 3, "")
    return f"{name}{pol}/{table.intensities[code >> 2]}"


def format_tiles(tiles: list[tuple[int, Tile]], table: LabelTable, m: ModelKind,
                 seed: Seed | None = None) -> str:
    """Write the tile-set text format; inverse of parse_tiles."""
    lines = []
    if seed is not None:
        for i, (off, t) in enumerate(seed.cells):
            offs = ",".join(str(x) for x in off)
            body = " ".join(f"{SIDE_NAMES[d]}={format_side(t[d], table, m)}"
                            for d in range(m.n_sides))
            lines.append(f"seed {i}@{offs}: {body}")
    for ident, t in tiles:
        body = " ".join(f"{SIDE_NAMES[d]}={format_side(t[d], table, m)}"
                        for d in range(m.n_sides))
        lines.append(f"tile {ident}: {body}")
    return "\n".join(lines) + "\n"
