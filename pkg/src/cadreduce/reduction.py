"""Lifting combinatorial tree merges to geometric CAD merges.

A merge at a pivot of level k < n is a genuine CAD operation only when the
section functions above the three merged cells glue to continuous functions
over the union.  That condition is verified either by a continuity
certificate shipped with the document, or by exact sampling: probe points on
the seam (the middle cell) are compared with evaluations at approach points
inside the flanking cells.  Inconclusive evidence rejects the merge, so the
procedure is sound but not complete.

Merges at leaf level (k = n) just drop a section from one stack and are
always valid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from cadreduce.cadmodel import (
    Cad,
    CellIndex,
    LeafLabeling,
    _sector_coords,
    word_of,
)
from cadreduce.errors import (
    GuardUndecidable,
    RuleNotApplicable,
    SectionOutOfRange,
    UnknownOrder,
)
from cadreduce.expr import (
    DEFAULT_PRECISION,
    Expr,
    Piecewise,
    Point,
    approx_equal,
    canonicalize,
    compare_coords,
    coord_shift,
    eval_coord,
)
from cadreduce.tree import CadTree, applicable_pivots, apply_merge, prefix, relabel_index

DEFAULT_TOLERANCE = Fraction(1, 2**20)


@dataclass(frozen=True)
class LiftConfig:
    """How merge conditions are decided."""

    mode: str = "sampled"  # "sampled" | "certificate"
    boundary_samples: int = 3
    precision: Fraction = DEFAULT_PRECISION
    tolerance: Fraction = DEFAULT_TOLERANCE
    rule_order: str = "deep-first"  # "deep-first" | "lex"

    def __post_init__(self):
        if self.mode not in ("sampled", "certificate"):
            raise ValueError(f"unknown lift mode {self.mode!r}")
        if self.rule_order not in ("deep-first", "lex"):
            raise ValueError(f"unknown rule order {self.rule_order!r}")
        if self.tolerance <= 0 or self.precision <= 0:
            raise ValueError("tolerance and precision must be positive")

    def pivot_key(self):
        if self.rule_order == "deep-first":
            return lambda p: (-len(p), p)
        return lambda p: p


def _tree_of(cad: Cad, labels: LeafLabeling) -> CadTree:
    return CadTree(cad.n, dict(cad.counts), dict(labels))


def try_lift(
    cad: Cad,
    labels: LeafLabeling,
    pivot: CellIndex,
    cfg: LiftConfig = LiftConfig(),
) -> tuple[Cad, LeafLabeling] | None:
    """Attempt the geometric merge at an applicable pivot.

    Returns the merged CAD (a coarsening of the same root, with transported
    labels), or None when the merge cannot be verified to be a CAD.
    """
    tree = _tree_of(cad, labels)
    if pivot not in applicable_pivots(tree):
        raise RuleNotApplicable(f"pivot {word_of(pivot)} is not applicable")
    if not _lift_allowed(cad, pivot, cfg):
        return None
    reduced = apply_merge(tree, pivot)
    new_cellmap: dict[CellIndex, tuple[CellIndex, ...]] = {}
    for k in range(cad.n + 1):
        for cell in cad.cells_of_level(k):
            image = relabel_index(pivot, cell)
            merged = new_cellmap.get(image, ())
            new_cellmap[image] = tuple(sorted(set(merged) | set(cad.root_cells(cell))))
    lifted = Cad(
        cad.n,
        root=cad.root,
        counts=reduced.counts,
        cellmap=new_cellmap,
        history=cad.history + (pivot,),
    )
    return lifted, dict(reduced.labels)


def _lift_allowed(cad: Cad, pivot: CellIndex, cfg: LiftConfig) -> bool:
    k = len(pivot)
    if k == cad.n:
        # Dropping a section from a leaf-level stack: the union of the three
        # cells is again a sector of the same stack.
        return True
    if cfg.mode == "certificate":
        # Certificates name pivots of the root document.  They remain valid
        # after leaf-level merges only (those neither rename pivots of lower
        # level nor change which base cells the merge glues).
        if any(len(h) < cad.n for h in cad.history):
            return False
        return pivot in cad.root.certificates
    left = pivot[:-1] + (pivot[-1] - 1,)
    right = pivot[:-1] + (pivot[-1] + 1,)
    for mid_cell in _subtree_cells(cad, pivot):
        suffix = mid_cell[k:]
        left_cell = left + suffix
        right_cell = right + suffix
        u = cad.stack_count(mid_cell)
        for slot in range(1, u + 1):
            if not _glues_continuously(cad, pivot, left_cell, mid_cell, right_cell, slot, cfg):
                return False
        if not _merged_stack_ordered(cad, (left_cell, mid_cell, right_cell), u, cfg):
            return False
    return True


def _subtree_cells(cad: Cad, top: CellIndex):
    """Cells of levels |top| .. n-1 below (and including) ``top``."""
    frontier = [top]
    while frontier:
        cell = frontier.pop()
        if len(cell) >= cad.n:
            continue
        yield cell
        frontier.extend(cell + (j,) for j in range(1, 2 * cad.stack_count(cell) + 2))


def _contains_piecewise(e: Expr) -> bool:
    from cadreduce.expr import Add, Div, Mul, Neg, Pow, Sqrt, Sub

    if isinstance(e, Piecewise):
        return True
    if isinstance(e, (Add, Sub, Mul, Div)):
        return _contains_piecewise(e.left) or _contains_piecewise(e.right)
    if isinstance(e, (Neg, Sqrt)):
        return _contains_piecewise(e.arg)
    if isinstance(e, Pow):
        return _contains_piecewise(e.base)
    return False


def _glues_continuously(
    cad: Cad,
    pivot: CellIndex,
    left_cell: CellIndex,
    mid_cell: CellIndex,
    right_cell: CellIndex,
    slot: int,
    cfg: LiftConfig,
) -> bool:
    pieces = (
        cad.section_pieces(left_cell, slot)
        + cad.section_pieces(mid_cell, slot)
        + cad.section_pieces(right_cell, slot)
    )
    canon = {canonicalize(e) for _, e in pieces}
    if len(canon) == 1 and not _contains_piecewise(next(iter(canon))):
        # One guard-free expression defined on all three cells (their stacks
        # are valid) is continuous on the union.
        return True
    k = len(pivot)
    try:
        probes = cad.cell_points(mid_cell, cfg.boundary_samples)
    except (UnknownOrder, GuardUndecidable):
        return False
    for point, root_cell in probes:
        try:
            mid_expr = cad.section_piece(mid_cell, slot, root_cell)
            v_mid = eval_coord(mid_expr, point, cfg.precision)
        except GuardUndecidable:
            return False
        for side_cell, direction in ((left_cell, -1), (right_cell, +1)):
            ok = _side_matches(
                cad, side_cell, slot, point, root_cell, k, direction, v_mid, cfg
            )
            if not ok:
                return False
    return True


def _side_matches(
    cad: Cad,
    side_cell: CellIndex,
    slot: int,
    seam_point: Point,
    seam_root_cell: CellIndex,
    k: int,
    direction: int,
    v_mid,
    cfg: LiftConfig,
) -> bool:
    """Evaluate the side's section at an approach point next to the seam and
    compare with the seam value within the tolerance."""
    try:
        approach, side_root = _approach_point(
            cad, side_cell, seam_point, seam_root_cell, k, direction, cfg
        )
        side_expr = cad.section_piece(side_cell, slot, side_root)
        v_side = eval_coord(side_expr, approach, cfg.precision)
    except (GuardUndecidable, UnknownOrder, KeyError):
        return False
    verdict = approx_equal(v_side, v_mid, cfg.tolerance, cfg.precision)
    return verdict is True


def _approach_point(
    cad: Cad,
    side_cell: CellIndex,
    seam_point: Point,
    seam_root_cell: CellIndex,
    k: int,
    direction: int,
    cfg: LiftConfig,
) -> tuple[Point, CellIndex]:
    """A point of ``side_cell`` close to the seam point.

    The seam point's level-k coordinate sits on a root section; step off it
    by a small delta (staying inside the adjacent root sector), then descend
    the side lineage, re-deriving the higher coordinates.
    """
    root = cad.root
    rk = seam_root_cell[:k]
    if rk[-1] % 2 != 0:
        raise KeyError(f"seam root cell {rk} is not a section")
    base = seam_point[: k - 1]
    y0 = seam_point[k - 1]
    # Gap to the neighbouring root section on this side (infinity if none).
    stack = root.stacks[rk[:-1]]
    j0 = rk[-1] // 2
    neighbour = j0 + direction
    delta_cap = Fraction(1)
    if 1 <= neighbour <= stack.count:
        bound = eval_coord(stack.functions[neighbour - 1], base, cfg.precision)
        gap = _positive_gap(y0, bound, direction, cfg)
        delta_cap = min(delta_cap, gap / 2)
    delta = min(delta_cap, cfg.tolerance / 4)
    point = base + (coord_shift(y0, direction * delta),)
    r = rk[:-1] + (rk[-1] + direction,)
    for level in range(k, len(side_cell)):
        node_child = side_cell[: level + 1]
        candidates = sorted(q for q in cad.root_cells(node_child) if q[:-1] == r)
        if not candidates:
            raise KeyError(f"no root cell of {node_child} above {r}")
        q = candidates[0]
        letter = q[-1]
        rstack = root.stacks[r]
        if letter % 2 == 0:
            coord = eval_coord(rstack.functions[letter // 2 - 1], point, cfg.precision)
        else:
            j = (letter - 1) // 2
            lo = eval_coord(rstack.functions[j - 1], point, cfg.precision) if j >= 1 else None
            hi = eval_coord(rstack.functions[j], point, cfg.precision) if j < rstack.count else None
            coord = _sector_coords(lo, hi, 1)[0]
        point = point + (coord,)
        r = q
    return point, r


def _positive_gap(y0, bound, direction, cfg: LiftConfig) -> Fraction:
    """A rational lower bound on |bound - y0| (they are strictly ordered)."""
    from cadreduce.expr import _promote, coord_approx

    w = Fraction(1, 4)
    for _ in range(24):
        ylo, yhi = _promote(coord_approx(y0, w))
        blo, bhi = _promote(coord_approx(bound, w))
        if direction > 0 and blo > yhi:
            return blo - yhi
        if direction < 0 and bhi < ylo:
            return ylo - bhi
        w /= 2**8
    raise UnknownOrder("cannot separate the seam coordinate from its neighbour")


def _merged_stack_ordered(cad: Cad, triple, u: int, cfg: LiftConfig) -> bool:
    """Strict ordering of the glued stack at the member cells' samples."""
    for cell in triple:
        for point, tag in cad.cell_points(cell, 1):
            values = []
            for slot in range(1, u + 1):
                try:
                    values.append(eval_coord(cad.section_piece(cell, slot, tag), point, cfg.precision))
                except (GuardUndecidable, KeyError):
                    return False
            for a, b in zip(values, values[1:]):
                try:
                    if compare_coords(a, b, cfg.precision) >= 0:
                        return False
                except UnknownOrder:
                    return False
    return True


# ---------------------------------------------------------------------------
# Minimization (the reduction loop)


@dataclass
class MinimizeResult:
    cad: Cad
    labels: LeafLabeling
    applied: list[CellIndex] = field(default_factory=list)

    @property
    def is_fixed_point(self) -> bool:
        return not self.applied


def minimize(cad: Cad, labels: LeafLabeling, cfg: LiftConfig = LiftConfig()) -> MinimizeResult:
    """Greedy reduction to a CAD admitting no liftable merge.

    Pivots are attempted in the configured deterministic order; the first
    lift that succeeds is applied and the search restarts on the result.
    """
    current, cur_labels = cad, labels
    applied: list[CellIndex] = []
    while True:
        pivots = sorted(applicable_pivots(_tree_of(current, cur_labels)), key=cfg.pivot_key())
        for pivot in pivots:
            res = try_lift(current, cur_labels, pivot, cfg)
            if res is not None:
                current, cur_labels = res
                applied.append(pivot)
                break
        else:
            return MinimizeResult(current, cur_labels, applied)


def reduction_reachable(
    target: Cad,
    start: Cad,
    start_labels: LeafLabeling,
    cfg: LiftConfig = LiftConfig(),
) -> bool:
    """Whether a chain of liftable merges from ``start`` reaches ``target``
    (reflexively), comparing canonical partitions of the shared root."""
    from cadreduce.cadmodel import coarsening_blocks

    root = start.root
    target_blocks = coarsening_blocks(target, root, cfg.precision)
    seen = set()
    queue = [(start, start_labels)]
    while queue:
        node, node_labels = queue.pop(0)
        blocks = node.partition_blocks()
        if blocks in seen:
            continue
        seen.add(blocks)
        if blocks == target_blocks:
            return True
        for pivot in sorted(applicable_pivots(_tree_of(node, node_labels)), key=cfg.pivot_key()):
            res = try_lift(node, node_labels, pivot, cfg)
            if res is not None:
                queue.append(res)
    return False


# ---------------------------------------------------------------------------
# Section insertion (refinement by slicing one sector)


def insert_section(
    cad: Cad,
    labels: LeafLabeling,
    base: CellIndex,
    sector_letter: int,
    section_function: Expr,
    probes: int = 4,
    precision: Fraction = DEFAULT_PRECISION,
) -> tuple[Cad, LeafLabeling]:
    """Split the sector above ``base`` with the graph of a new section
    function, duplicating everything above it; returns a finer root CAD.

    The function must be strictly between the sector's bounding sections at
    all probe points of the base cell.
    """
    if not cad.is_root:
        raise ValueError("insert_section expects a root CAD")
    p = len(base) + 1
    if p > cad.n:
        raise ValueError("cannot insert a section below leaf level")
    stack = cad.stacks[base]
    if sector_letter % 2 != 1 or not (1 <= sector_letter <= 2 * stack.count + 1):
        raise ValueError(f"{sector_letter} is not a sector letter of the stack above {word_of(base)}")
    j = (sector_letter - 1) // 2  # insert after section j
    for point, _tag in cad.cell_points(base, probes):
        v = eval_coord(section_function, point, precision)
        if j >= 1:
            lo = eval_coord(stack.functions[j - 1], point, precision)
            if compare_coords(v, lo, precision) <= 0:
                raise SectionOutOfRange(
                    f"new section is not strictly above section {j} at {point}"
                )
        if j < stack.count:
            hi = eval_coord(stack.functions[j], point, precision)
            if compare_coords(v, hi, precision) >= 0:
                raise SectionOutOfRange(
                    f"new section is not strictly below section {j + 1} at {point}"
                )

    def images(cell: CellIndex) -> list[CellIndex]:
        if len(cell) < p or cell[: p - 1] != base:
            return [cell]
        m = cell[p - 1]
        if m < sector_letter:
            return [cell]
        if m > sector_letter:
            return [cell[: p - 1] + (m + 2,) + cell[p:]]
        return [cell[: p - 1] + (sector_letter + d,) + cell[p:] for d in (0, 1, 2)]

    new_stacks = {}
    for cell, s in cad.stacks.items():
        for image in images(cell):
            new_stacks[image] = s
    new_stacks[base] = type(stack)(
        stack.functions[:j] + (section_function,) + stack.functions[j:]
    )
    new_samples = {}
    for cell, pt in cad.sample_overrides.items():
        img = images(cell)
        if len(img) == 1:
            # Renamed but geometrically unchanged cells keep their witness;
            # the split sector's witnesses are recomputed.
            new_samples[img[0]] = pt
    new_labels: LeafLabeling = {}
    for leaf, bit in labels.items():
        for image in images(leaf):
            new_labels[image] = bit
    refined = Cad(cad.n, new_stacks, samples=new_samples)
    return refined, new_labels
