"""The poset of coarsenings below a root CAD.

Exploration enumerates the closure of the root under liftable merges,
deduplicating coarsenings by the partition of root leaves they induce.  On
the resulting finite graph, minimal elements are the sinks, a minimum must
also be reachable from every node, and confluence is decided locally (any
two one-step reducts of a node rejoin).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from cadreduce.cadmodel import (
    Cad,
    CellIndex,
    LeafLabeling,
    SectionStack,
    _sector_coords,
    locate,
    word_of,
)
from cadreduce.errors import SectionsCross, UnknownOrder
from cadreduce.expr import (
    DEFAULT_PRECISION,
    Expr,
    Point,
    compare_coords,
    eval_coord,
)
from cadreduce.reduction import LiftConfig, _contains_piecewise, _tree_of, try_lift
from cadreduce.tree import applicable_pivots

Blocks = frozenset[frozenset[CellIndex]]


@dataclass
class CanonicalCoarsening:
    """A node of the poset: a coarsening identified by its leaf partition."""

    blocks: Blocks
    cad: Cad
    labels: LeafLabeling
    history: tuple[CellIndex, ...]

    @property
    def leaf_count(self) -> int:
        return len(self.blocks)


@dataclass
class PosetGraph:
    root_key: Blocks
    nodes: dict[Blocks, CanonicalCoarsening] = field(default_factory=dict)
    edges: set[tuple[Blocks, CellIndex, Blocks]] = field(default_factory=set)

    def successors(self, key: Blocks) -> set[Blocks]:
        return {dst for src, _p, dst in self.edges if src == key}

    def descendants(self, key: Blocks) -> set[Blocks]:
        """Reflexive-transitive closure of the edge relation from a node."""
        seen = {key}
        frontier = [key]
        while frontier:
            node = frontier.pop()
            for nxt in self.successors(node):
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return seen


def explore(root: Cad, labels: LeafLabeling, cfg: LiftConfig = LiftConfig()) -> PosetGraph:
    """Breadth-first closure of the root under liftable merges."""
    root_key = root.partition_blocks()
    graph = PosetGraph(root_key=root_key)
    queue: list[tuple[Cad, LeafLabeling, tuple[CellIndex, ...]]] = [(root, labels, ())]
    while queue:
        cad, labs, history = queue.pop(0)
        key = cad.partition_blocks()
        if key in graph.nodes:
            continue
        graph.nodes[key] = CanonicalCoarsening(key, cad, labs, history)
        for pivot in sorted(applicable_pivots(_tree_of(cad, labs)), key=cfg.pivot_key()):
            res = try_lift(cad, labs, pivot, cfg)
            if res is None:
                continue
            child, child_labels = res
            child_key = child.partition_blocks()
            graph.edges.add((key, pivot, child_key))
            if child_key not in graph.nodes:
                queue.append((child, child_labels, history + (pivot,)))
    return graph


def minimal_elements(graph: PosetGraph) -> set[Blocks]:
    """Nodes with no outgoing merge."""
    sources = {src for src, _p, _dst in graph.edges}
    return {key for key in graph.nodes if key not in sources}


def minimum_element(graph: PosetGraph) -> Blocks | None:
    """The unique sink, provided every node reaches it.

    Reachability from every node is required so that a merge conservatively
    rejected by the sampling mode cannot manufacture a spurious minimum.
    """
    sinks = minimal_elements(graph)
    if len(sinks) != 1:
        return None
    (sink,) = sinks
    for key in graph.nodes:
        if sink not in graph.descendants(key):
            return None
    return sink


def is_locally_confluent(graph: PosetGraph) -> bool:
    for key in graph.nodes:
        succ = sorted(graph.successors(key), key=sorted)
        for i, a in enumerate(succ):
            da = graph.descendants(a)
            for b in succ[i + 1 :]:
                if not (da & graph.descendants(b)):
                    return False
    return True


def is_globally_confluent(graph: PosetGraph) -> bool:
    """Direct check that every star-divergence rejoins (used to cross-check
    the local test at desk scale)."""
    for key in graph.nodes:
        desc = sorted(graph.descendants(key), key=sorted)
        for i, a in enumerate(desc):
            da = graph.descendants(a)
            for b in desc[i + 1 :]:
                if not (da & graph.descendants(b)):
                    return False
    return True


# ---------------------------------------------------------------------------
# Counting coarser partitions


def count_strict_coarsenings(k: int) -> int:
    """Number of partitions strictly coarser than a discrete partition of k
    cells: the k-th Bell number minus one (Bell triangle, exact integers)."""
    if k < 1:
        raise ValueError("need a positive cell count")
    row = [1]
    for _ in range(k - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[-1] - 1


# ---------------------------------------------------------------------------
# Cylinder extension


def extend_cylinder(cad: Cad, labels: LeafLabeling, n: int) -> tuple[Cad, LeafLabeling]:
    """Extend a root CAD of R^m to R^n (n >= m) by full-line cylinders:
    every added level has one sector per cell.  Labels are inherited."""
    if not cad.is_root:
        raise ValueError("extend_cylinder expects a root CAD")
    if n < cad.n:
        raise ValueError(f"cannot extend R^{cad.n} down to R^{n}")
    if n == cad.n:
        return cad, dict(labels)
    stacks = dict(cad.stacks)
    cells = cad.leaves()
    for _level in range(cad.n, n):
        for cell in cells:
            stacks[cell] = SectionStack(())
        cells = [cell + (1,) for cell in cells]
    new_labels = {leaf + (1,) * (n - cad.n): bit for leaf, bit in labels.items()}
    extended = Cad(n, stacks, samples=dict(cad.sample_overrides), certificates=cad.certificates)
    return extended, new_labels


# ---------------------------------------------------------------------------
# Common refinement (restricted: sections from the two CADs must not cross)


@dataclass
class _MergedSection:
    expr: Expr
    slot1: int | None
    slot2: int | None


def common_refinement(
    c1: Cad,
    labels1: LeafLabeling,
    c2: Cad,
    labels2: LeafLabeling,
    precision: Fraction = DEFAULT_PRECISION,
    probes: int = 3,
) -> tuple[Cad, LeafLabeling]:
    """A CAD refining both inputs, built level by level by merging section
    stacks; fails with SectionsCross when sections from the two CADs cross
    inside a merged cell (full CAD construction is out of scope)."""
    if not (c1.is_root and c2.is_root):
        raise ValueError("common refinement expects root CADs")
    if c1.n != c2.n:
        raise ValueError("dimensions differ")
    n = c1.n
    stacks: dict[CellIndex, SectionStack] = {}
    leaf_sources: dict[CellIndex, tuple[CellIndex, CellIndex]] = {}

    def recurse(index: CellIndex, idx1: CellIndex, idx2: CellIndex, points: list[Point]):
        if len(index) == n:
            leaf_sources[index] = (idx1, idx2)
            return
        merged = _merge_stacks(
            c1.stacks[idx1].functions, c2.stacks[idx2].functions, points, precision
        )
        stacks[index] = SectionStack(tuple(m.expr for m in merged))
        u = len(merged)
        for letter in range(1, 2 * u + 2):
            passed = merged[: letter // 2] if letter % 2 == 0 else merged[: (letter - 1) // 2]
            consumed1 = sum(1 for m in passed if m.slot1 is not None)
            consumed2 = sum(1 for m in passed if m.slot2 is not None)
            if letter % 2 == 0:
                entry = merged[letter // 2 - 1]
                child1 = idx1 + ((2 * entry.slot1,) if entry.slot1 is not None else (2 * consumed1 + 1,))
                child2 = idx2 + ((2 * entry.slot2,) if entry.slot2 is not None else (2 * consumed2 + 1,))
                child_points = [p + (eval_coord(entry.expr, p, precision),) for p in points]
            else:
                child1 = idx1 + (2 * consumed1 + 1,)
                child2 = idx2 + (2 * consumed2 + 1,)
                j = (letter - 1) // 2
                child_points = []
                for p in points:
                    lo = eval_coord(merged[j - 1].expr, p, precision) if j >= 1 else None
                    hi = eval_coord(merged[j].expr, p, precision) if j < u else None
                    for c in _sector_coords(lo, hi, probes):
                        child_points.append(p + (c,))
                child_points = child_points[: max(probes, 1)]
            recurse(index + (letter,), child1, child2, child_points)

    recurse((), (), (), [()])
    refined = Cad(n, stacks)
    labels: LeafLabeling = {}
    for leaf, (l1, l2) in leaf_sources.items():
        b1, b2 = labels1[l1], labels2[l2]
        if b1 != b2:
            raise SectionsCross(
                f"inputs label the merged cell {word_of(leaf)} inconsistently"
            )
        labels[leaf] = b1
    _verify_refines_input(refined, c1, leaf_sources, 0, precision)
    _verify_refines_input(refined, c2, leaf_sources, 1, precision)
    return refined, labels


def _verify_refines_input(refined: Cad, original: Cad, leaf_sources, which: int, precision) -> None:
    located_leaves = set()
    for leaf, sources in leaf_sources.items():
        host = locate(original, refined.sample(leaf), precision)
        if host != sources[which]:
            raise SectionsCross(
                f"cell {word_of(leaf)} escapes input cell {word_of(sources[which])}"
            )
        located_leaves.add(host)
    if located_leaves != set(original.leaves()):
        raise SectionsCross("some input cells contain no cell of the refinement")


def _merge_stacks(
    fns1: tuple[Expr, ...],
    fns2: tuple[Expr, ...],
    points: list[Point],
    precision: Fraction,
) -> list[_MergedSection]:
    def order(e1: Expr, e2: Expr) -> int:
        verdicts = set()
        for p in points:
            v1 = eval_coord(e1, p, precision)
            v2 = eval_coord(e2, p, precision)
            try:
                verdicts.add(compare_coords(v1, v2, precision))
            except UnknownOrder as exc:
                raise UnknownOrder(
                    f"cannot order sections at probe {p}: {exc}"
                ) from exc
        if len(verdicts) > 1:
            raise SectionsCross("sections from the two CADs cross inside a merged cell")
        return verdicts.pop()

    out: list[_MergedSection] = []
    i = j = 0
    while i < len(fns1) and j < len(fns2):
        c = order(fns1[i], fns2[j])
        if c < 0:
            out.append(_MergedSection(fns1[i], i + 1, None))
            i += 1
        elif c > 0:
            out.append(_MergedSection(fns2[j], None, j + 1))
            j += 1
        else:
            expr = fns1[i]
            if _contains_piecewise(expr) and not _contains_piecewise(fns2[j]):
                expr = fns2[j]
            out.append(_MergedSection(expr, i + 1, j + 1))
            i += 1
            j += 1
    while i < len(fns1):
        out.append(_MergedSection(fns1[i], i + 1, None))
        i += 1
    while j < len(fns2):
        out.append(_MergedSection(fns2[j], None, j + 1))
        j += 1
    return out


# ---------------------------------------------------------------------------
# Reports


def poset_to_dot(graph: PosetGraph, title: str = "poset") -> str:
    """Graphviz DOT: nodes annotated with leaf counts, edges with pivots."""
    names: dict[Blocks, str] = {}
    for i, key in enumerate(sorted(graph.nodes, key=lambda k: (-len(k), sorted(map(sorted, k))))):
        names[key] = f"n{i}"
    lines = [f'digraph "{title}" {{', '  node [fontname="Helvetica", shape=box];']
    for key, name in names.items():
        node = graph.nodes[key]
        shape = ", peripheries=2" if key == graph.root_key else ""
        lines.append(f'  {name} [label="{node.leaf_count} leaves"{shape}];')
    for src, pivot, dst in sorted(graph.edges, key=lambda e: (names[e[0]], names[e[2]], e[1])):
        lines.append(f'  {names[src]} -> {names[dst]} [label="{word_of(pivot)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def poset_report(graph: PosetGraph) -> dict:
    """JSON-ready summary of an explored poset."""
    minimal = sorted(minimal_elements(graph), key=lambda k: (len(k), sorted(map(sorted, k))))
    minimum = minimum_element(graph)

    def describe(key: Blocks) -> dict:
        node = graph.nodes[key]
        return {
            "leaf_count": node.leaf_count,
            "history": [word_of(p) for p in node.history],
        }

    return {
        "node_count": len(graph.nodes),
        "edge_count": len(graph.edges),
        "root_leaf_count": graph.nodes[graph.root_key].leaf_count,
        "minimal": [describe(k) for k in minimal],
        "minimum": describe(minimum) if minimum is not None else None,
        "confluent": is_locally_confluent(graph),
    }
