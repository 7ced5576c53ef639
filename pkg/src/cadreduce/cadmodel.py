"""The CAD data model: level stacks, cells, samples, and structural checks.

A CAD of R^n is stored as its stack structure: for every cell of level
k < n (level 0 is the one-point base cell with the empty index), the ordered
list of section functions that slice the cylinder above it.  Cells are named
by index words; a cell of level k has index (i_1, ..., i_k), where an even
last letter names a section (the graph of a stack function) and an odd last
letter names a sector (the open band between consecutive sections).

A CAD object either owns its geometry (a *root*), or is a coarsening of a
root obtained by cell merges, in which case every cell maps to the tuple of
root cells whose union it is and all numeric data is read off the root.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from cadreduce.errors import (
    GuardUndecidable,
    NotAdapted,
    NotComparableRepresentation,
    UnknownOrder,
)
from cadreduce.expr import (
    DEFAULT_PRECISION,
    CoordValue,
    Expr,
    Formula,
    Piecewise,
    Point,
    _promote,
    compare_coords,
    coord_approx,
    eval_coord,
    formula_holds,
    max_var_index,
)

CellIndex = tuple[int, ...]

ROOT_INDEX: CellIndex = ()


def word_of(index: CellIndex) -> str:
    return ".".join(str(i) for i in index)


def parse_word(word: str) -> CellIndex:
    if word == "":
        return ()
    try:
        letters = tuple(int(p) for p in word.split("."))
    except ValueError as exc:
        raise ValueError(f"bad cell index word: {word!r}") from exc
    if any(i < 1 for i in letters):
        raise ValueError(f"cell index letters must be positive: {word!r}")
    return letters


def is_section(index: CellIndex) -> bool:
    return bool(index) and index[-1] % 2 == 0


@dataclass(frozen=True)
class SectionStack:
    """The ordered section functions slicing the cylinder above one cell."""

    functions: tuple[Expr, ...]

    @property
    def count(self) -> int:
        return len(self.functions)


LeafLabeling = dict[CellIndex, int]

# A probe point together with the root cell it was generated in.
TaggedPoint = tuple[Point, CellIndex]

_OFFSET_STEPS = 8
_MAX_REFINE = 12
_REFINE_FACTOR = Fraction(1, 2**12)


def _interleave(lists: list[list]) -> list:
    out = []
    i = 0
    while True:
        added = False
        for lst in lists:
            if i < len(lst):
                out.append(lst[i])
                added = True
        if not added:
            return out
        i += 1


def _window_between(lo: CoordValue, hi: CoordValue) -> tuple[Fraction, Fraction]:
    """A rational open window strictly inside (lo, hi)."""
    w = Fraction(1, 4)
    for _ in range(_MAX_REFINE):
        llo, lhi = _promote(coord_approx(lo, w))
        hlo, hhi = _promote(coord_approx(hi, w))
        if lhi < hlo:
            return lhi, hlo
        w *= _REFINE_FACTOR
    raise UnknownOrder(f"cannot separate section values {lo} and {hi}")


def _sector_coords(lo: CoordValue | None, hi: CoordValue | None, count: int) -> list[Fraction]:
    """Deterministic rational coordinates strictly inside a sector fiber."""
    if lo is None and hi is None:
        pool = [Fraction(0)]
        for k in range(1, _OFFSET_STEPS):
            pool += [Fraction(k), Fraction(-k)]
        return pool[:count]
    if lo is None:
        assert hi is not None
        top = _promote(coord_approx(hi, Fraction(1, 4)))[0]
        return [top - k for k in range(1, count + 1)]
    if hi is None:
        bot = _promote(coord_approx(lo, Fraction(1, 4)))[1]
        return [bot + k for k in range(1, count + 1)]
    a, b = _window_between(lo, hi)
    gap = b - a
    fracs = [Fraction(1, 2), Fraction(1, 4), Fraction(3, 4), Fraction(1, 8), Fraction(3, 8), Fraction(5, 8), Fraction(7, 8)]
    while len(fracs) < count:
        fracs.append(Fraction(1, 2) ** (len(fracs) - 3))
    return [a + t * gap for t in fracs[:count]]


class Cad:
    """A CAD of R^n, either owning its geometry or viewing a root through a
    coarsening map."""

    def __init__(
        self,
        n: int,
        stacks: dict[CellIndex, SectionStack] | None = None,
        *,
        samples: dict[CellIndex, Point] | None = None,
        certificates: frozenset[CellIndex] = frozenset(),
        root: "Cad | None" = None,
        counts: dict[CellIndex, int] | None = None,
        cellmap: dict[CellIndex, tuple[CellIndex, ...]] | None = None,
        history: tuple[CellIndex, ...] = (),
    ):
        self.n = n
        if root is None:
            if stacks is None:
                raise ValueError("a root CAD needs stacks")
            self.root: Cad = self
            self.stacks = stacks
            self.counts = {cell: stack.count for cell, stack in stacks.items()}
            self.cellmap = None  # identity
            self.sample_overrides = dict(samples or {})
            self.certificates = certificates
            self.history: tuple[CellIndex, ...] = ()
            self._sample_cache: dict[CellIndex, Point] = {}
            self._point_cache: dict[tuple[CellIndex, int], list[TaggedPoint]] = {}
        else:
            assert counts is not None and cellmap is not None
            self.root = root
            self.stacks = None
            self.counts = counts
            self.cellmap = cellmap
            self.sample_overrides = {}
            self.certificates = frozenset()
            self.history = history

    # -- structure ---------------------------------------------------------

    @property
    def is_root(self) -> bool:
        return self.root is self

    def stack_count(self, cell: CellIndex) -> int:
        return self.counts[cell]

    def children(self, cell: CellIndex) -> list[CellIndex]:
        return [cell + (j,) for j in range(1, 2 * self.counts[cell] + 2)]

    def cells_of_level(self, k: int) -> list[CellIndex]:
        cells: list[CellIndex] = [ROOT_INDEX]
        for _ in range(k):
            cells = [c for parent in cells for c in self.children(parent)]
        return cells

    def all_cells(self) -> Iterator[CellIndex]:
        for k in range(self.n + 1):
            yield from self.cells_of_level(k)

    def leaves(self) -> list[CellIndex]:
        return self.cells_of_level(self.n)

    def leaf_count(self) -> int:
        return len(self.leaves())

    def root_cells(self, cell: CellIndex) -> tuple[CellIndex, ...]:
        """The root cells whose union this cell is."""
        if self.cellmap is None:
            return (cell,)
        return self.cellmap[cell]

    # -- geometry ----------------------------------------------------------

    def section_piece(self, cell: CellIndex, slot: int, root_parent: CellIndex) -> Expr:
        """The root stack function realizing section ``slot`` of the stack
        above ``cell``, over the given root cell of ``cell``."""
        section = cell + (2 * slot,)
        for q in self.root_cells(section):
            if q[:-1] == root_parent:
                return self.root.stacks[root_parent].functions[q[-1] // 2 - 1]
        raise KeyError(f"no piece of section {section} over root cell {root_parent}")

    def section_pieces(self, cell: CellIndex, slot: int) -> list[tuple[CellIndex, Expr]]:
        """All (root parent cell, expression) pieces of one stack function."""
        section = cell + (2 * slot,)
        return [
            (q[:-1], self.root.stacks[q[:-1]].functions[q[-1] // 2 - 1])
            for q in self.root_cells(section)
        ]

    def sample(self, cell: CellIndex) -> Point:
        """A witness point inside the cell (the root cell's derived sample)."""
        if not self.is_root:
            return self.root.sample(self.root_cells(cell)[0])
        cached = self._sample_cache.get(cell)
        if cached is not None:
            return cached
        pt = self.cell_points(cell, 1)[0][0]
        self._sample_cache[cell] = pt
        return pt

    def cell_points(self, cell: CellIndex, count: int) -> list[TaggedPoint]:
        """Deterministic probe points inside the cell, tagged with the root
        cell each point lies in.  The first point is the cell's sample."""
        if not self.is_root:
            per_root = [self.root.cell_points(r, count) for r in self.root_cells(cell)]
            return _interleave(per_root)[:count]
        key = (cell, count)
        cached = self._point_cache.get(key)
        if cached is not None:
            return cached
        pts = self._root_points(cell, count)
        self._point_cache[key] = pts
        return pts

    def _root_points(self, cell: CellIndex, count: int) -> list[TaggedPoint]:
        if cell == ROOT_INDEX:
            return [((), ROOT_INDEX)]
        parent, letter = cell[:-1], cell[-1]
        bases = self.cell_points(parent, count)
        stack = self.stacks[parent]
        per_base: list[list[Point]] = []
        for base, _tag in bases:
            if letter % 2 == 0:
                coords: list[CoordValue] = [eval_coord(stack.functions[letter // 2 - 1], base)]
            else:
                j = (letter - 1) // 2
                lo = eval_coord(stack.functions[j - 1], base) if j >= 1 else None
                hi = eval_coord(stack.functions[j], base) if j < stack.count else None
                coords = list(_sector_coords(lo, hi, count))
            per_base.append([base + (c,) for c in coords])
        points = _interleave(per_base)[:count]
        override = self.sample_overrides.get(cell)
        if override is not None:
            points = [override] + [p for p in points if p != override]
            points = points[:max(count, 1)]
        return [(p, cell) for p in points]

    # -- partitions --------------------------------------------------------

    def partition_blocks(self) -> frozenset[frozenset[CellIndex]]:
        """The partition of root leaves induced by this CAD's leaves."""
        return frozenset(frozenset(self.root_cells(leaf)) for leaf in self.leaves())

    def canonical_key(self):
        """Structural identity for root CADs (used by round-trip tests)."""
        from cadreduce.expr import canonicalize, sexpr_of_expr

        if not self.is_root:
            raise ValueError("canonical_key is for root CADs")
        stacks = tuple(
            (word_of(cell), tuple(sexpr_of_expr(canonicalize(f)) for f in self.stacks[cell].functions))
            for cell in sorted(self.stacks)
        )
        return (self.n, stacks, tuple(sorted(word_of(c) for c in self.certificates)))


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    undecided: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok and not self.undecided:
            return "valid"
        lines = [f"violation: {v}" for v in self.violations]
        lines += [f"undecided: {u}" for u in self.undecided]
        return "\n".join(lines)


def validate_cad(
    cad: Cad,
    precision: Fraction = DEFAULT_PRECISION,
    probes: int = 2,
) -> ValidationReport:
    """Structural validation: stack keys, variable arity, strict stack
    ordering at probe points, sample containment, guard disjointness."""
    report = ValidationReport()
    if cad.is_root:
        expected = {c for k in range(cad.n) for c in cad.cells_of_level(k)}
        actual = set(cad.stacks)
        for missing in sorted(expected - actual):
            report.violations.append(f"cell {word_of(missing)} has no stack")
        for extra in sorted(actual - expected):
            report.violations.append(f"stack for nonexistent cell {word_of(extra)}")
        if not report.ok:
            return report
        for cell, stack in cad.stacks.items():
            for i, f in enumerate(stack.functions, start=1):
                if max_var_index(f) > len(cell):
                    report.violations.append(
                        f"section {i} above {word_of(cell)!r} uses variables beyond level {len(cell)}"
                    )
    for k in range(cad.n):
        for cell in cad.cells_of_level(k):
            u = cad.stack_count(cell)
            try:
                points = cad.cell_points(cell, probes)
            except (UnknownOrder, GuardUndecidable) as exc:
                report.undecided.append(f"cannot derive probes in {word_of(cell)}: {exc}")
                continue
            for point, tag in points:
                values = []
                for slot in range(1, u + 1):
                    try:
                        f = cad.section_piece(cell, slot, tag)
                        values.append((slot, eval_coord(f, point, precision)))
                    except GuardUndecidable as exc:
                        report.undecided.append(
                            f"section {slot} above {word_of(cell)} undecided at {point}: {exc}"
                        )
                for (s1, v1), (s2, v2) in zip(values, values[1:]):
                    try:
                        c = compare_coords(v1, v2, precision)
                    except UnknownOrder as exc:
                        report.undecided.append(
                            f"order of sections {s1},{s2} above {word_of(cell)} undecided: {exc}"
                        )
                        continue
                    if c >= 0:
                        report.violations.append(
                            f"sections {s1},{s2} above {word_of(cell)} are not strictly ordered at {point}"
                        )
                _check_guard_disjointness(cad, cell, point, tag, report, precision)
    _check_sample_overrides(cad, report, precision)
    return report


def _check_guard_disjointness(cad, cell, point, tag, report, precision):
    u = cad.stack_count(cell)
    for slot in range(1, u + 1):
        try:
            f = cad.section_piece(cell, slot, tag)
        except KeyError:
            continue
        if not isinstance(f, Piecewise):
            continue
        true_guards = 0
        for guard, _ in f.pieces:
            try:
                if formula_holds(guard, point, precision):
                    true_guards += 1
            except GuardUndecidable:
                report.undecided.append(
                    f"piecewise guard above {word_of(cell)} undecided at {point}"
                )
        if true_guards > 1:
            report.violations.append(
                f"piecewise guards above {word_of(cell)} overlap at {point}"
            )


def _check_sample_overrides(cad: Cad, report: ValidationReport, precision: Fraction) -> None:
    if not cad.is_root:
        return
    for cell, point in cad.sample_overrides.items():
        if len(point) != len(cell):
            report.violations.append(f"sample for {word_of(cell)} has wrong arity")
            continue
        try:
            located = locate(cad, point, precision)
        except (UnknownOrder, GuardUndecidable) as exc:
            report.undecided.append(f"sample for {word_of(cell)} undecided: {exc}")
            continue
        except ValueError as exc:
            report.violations.append(f"sample for {word_of(cell)}: {exc}")
            continue
        if located != cell:
            report.violations.append(
                f"sample for {word_of(cell)} lies in cell {word_of(located)}"
            )


# ---------------------------------------------------------------------------
# Adaptedness and location


def check_adapted(
    cad: Cad,
    formula: Formula,
    precision: Fraction = DEFAULT_PRECISION,
    probes: int = 3,
) -> LeafLabeling:
    """Label every leaf by set membership of its sample; extra probe points
    per leaf must agree, otherwise the CAD is not adapted to the set."""
    labels: LeafLabeling = {}
    for leaf in cad.leaves():
        points = cad.cell_points(leaf, max(1, probes))
        verdicts = [(formula_holds(formula, p, precision), p) for p, _tag in points]
        first = verdicts[0][0]
        for truth, point in verdicts[1:]:
            if truth != first:
                inside = next(p for t, p in verdicts if t)
                outside = next(p for t, p in verdicts if not t)
                raise NotAdapted(leaf, inside, outside)
        labels[leaf] = 1 if first else 0
    return labels


def locate(cad: Cad, point, precision: Fraction = DEFAULT_PRECISION) -> CellIndex:
    """The index of the cell of a root CAD containing the point.

    Points of arity k < n are located in the level-k decomposition.
    """
    if not cad.is_root:
        raise ValueError("locate works on root CADs")
    from cadreduce.expr import as_point

    pt = as_point(point)
    if len(pt) > cad.n:
        raise ValueError(f"point has arity {len(pt)}, expected at most {cad.n}")
    cell: CellIndex = ROOT_INDEX
    for k in range(len(pt)):
        base = pt[:k]
        y = pt[k]
        stack = cad.stacks[cell]
        letter = 2 * stack.count + 1
        for j, f in enumerate(stack.functions, start=1):
            v = eval_coord(f, base, precision)
            c = compare_coords(y, v, precision)
            if c == 0:
                letter = 2 * j
                break
            if c < 0:
                letter = 2 * j - 1
                break
        cell = cell + (letter,)
    return cell


# ---------------------------------------------------------------------------
# Refinement order


def coarsening_blocks(cad: Cad, root: Cad, precision: Fraction = DEFAULT_PRECISION):
    """Represent ``cad`` as a partition of the root's leaves.

    Uses the coarsening map when ``cad`` shares the root; otherwise embeds by
    locating every root leaf sample in ``cad``.
    """
    if cad.root is root:
        return cad.partition_blocks()
    if cad is root:
        return frozenset(frozenset((leaf,)) for leaf in root.leaves())
    if not cad.is_root:
        raise NotComparableRepresentation(
            "CAD is a coarsening of a different root"
        )
    groups: dict[CellIndex, set[CellIndex]] = {}
    for leaf in root.leaves():
        try:
            host = locate(cad, root.sample(leaf), precision)
        except (UnknownOrder, GuardUndecidable) as exc:
            raise NotComparableRepresentation(
                f"cannot locate root leaf {word_of(leaf)}: {exc}"
            ) from exc
        groups.setdefault(host, set()).add(leaf)
    missing = set(cad.leaves()) - set(groups)
    if missing:
        raise NotComparableRepresentation(
            f"cells {sorted(word_of(c) for c in missing)} contain no root sample"
        )
    return frozenset(frozenset(g) for g in groups.values())


def refines(fine: Cad, coarse: Cad, root: Cad, precision: Fraction = DEFAULT_PRECISION) -> bool:
    """Whether every cell of ``coarse`` is a union of cells of ``fine``,
    with both CADs represented as partitions of the root's leaves."""
    fine_blocks = coarsening_blocks(fine, root, precision)
    coarse_blocks = coarsening_blocks(coarse, root, precision)
    return partition_refines(fine_blocks, coarse_blocks)


def partition_refines(fine_blocks, coarse_blocks) -> bool:
    owner: dict = {}
    for block in coarse_blocks:
        for x in block:
            owner[x] = block
    for block in fine_blocks:
        items = iter(block)
        first = next(items)
        host = owner.get(first)
        if host is None or not block <= host:
            return False
    return True
