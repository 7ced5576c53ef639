"""Built-in fixture CADs: the unit disk family and two families of surface
gluings over the plane (a half-plane sheet that bends over the positive
quadrant, and its unbounded-region variant).

Each entry records the CAD, the defining formula, the leaf labelling, and a
set of expected structural facts used by the self-check suite.  Facts carry
a provenance tag: "reported" facts are fixed targets, "derived" facts were
computed with independent oracles when the fixtures were frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from cadreduce.cadmodel import Cad, CellIndex, LeafLabeling, SectionStack, parse_word
from cadreduce.expr import Formula, parse_expr, parse_formula

F = Fraction


@dataclass
class GalleryEntry:
    name: str
    cad: Cad
    formula: Formula
    labels: LeafLabeling
    expected: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


def _stacks(spec: dict[str, list[str]]) -> dict[CellIndex, SectionStack]:
    return {
        parse_word(word): SectionStack(tuple(parse_expr(s) for s in exprs))
        for word, exprs in spec.items()
    }


def _labels(spec: dict[str, int]) -> LeafLabeling:
    return {parse_word(w): v for w, v in spec.items()}


def _cylinder_labels(pattern: tuple[int, ...], cylinders: list[str]) -> dict[str, int]:
    out: dict[str, int] = {}
    for cyl in cylinders:
        for i, v in enumerate(pattern, start=1):
            out[f"{cyl}.{i}" if cyl else str(i)] = v
    return out


DISK_FORMULA = "(le (sub (add (pow x1 2) (pow x2 2)) 1) 0)"

_SQRT_UP = "(sqrt (sub 1 (pow x1 2)))"
_SQRT_DOWN = "(neg (sqrt (sub 1 (pow x1 2))))"
_HYPER = "(sub 1 (div 1 (mul 2 (sub (pow x1 2) 1))))"


def disk_c() -> GalleryEntry:
    cad = Cad(
        2,
        _stacks(
            {
                "": ["-1", "1"],
                "1": [],
                "2": ["0"],
                "3": [_SQRT_DOWN, _SQRT_UP],
                "4": ["0"],
                "5": [],
            }
        ),
    )
    labels = _labels(
        {
            "1.1": 0,
            **_cylinder_labels((0, 1, 0), ["2", "4"]),
            **_cylinder_labels((0, 1, 1, 1, 0), ["3"]),
            "5.1": 0,
        }
    )
    return GalleryEntry(
        name="disk-C",
        cad=cad,
        formula=parse_formula(DISK_FORMULA),
        labels=labels,
        expected={"leaf_count": 13, "pivots": set(), "minimize_fixed_point": True},
        provenance={"leaf_count": "reported", "pivots": "derived", "minimize_fixed_point": "derived"},
    )


def disk_cp() -> GalleryEntry:
    cad = Cad(
        2,
        _stacks(
            {
                "": ["-1", "0", "1"],
                "1": [],
                "2": ["0"],
                "3": [_SQRT_DOWN, _SQRT_UP],
                "4": [_SQRT_DOWN, _SQRT_UP],
                "5": [_SQRT_DOWN, _SQRT_UP],
                "6": ["0"],
                "7": [],
            }
        ),
        certificates=frozenset({(4,)}),
    )
    labels = _labels(
        {
            "1.1": 0,
            **_cylinder_labels((0, 1, 0), ["2", "6"]),
            **_cylinder_labels((0, 1, 1, 1, 0), ["3", "4", "5"]),
            "7.1": 0,
        }
    )
    return GalleryEntry(
        name="disk-Cp",
        cad=cad,
        formula=parse_formula(DISK_FORMULA),
        labels=labels,
        expected={
            "leaf_count": 23,
            "pivots": {"4"},
            "minimize_fixed_point": False,
            "minimize_leaf_count": 13,
        },
        provenance={
            "leaf_count": "derived",
            "pivots": "derived",
            "minimize_fixed_point": "reported",
            "minimize_leaf_count": "reported",
        },
    )


def disk_cpp() -> GalleryEntry:
    cad = Cad(
        2,
        _stacks(
            {
                "": ["-1", "0", "1"],
                "1": [],
                "2": ["0"],
                "3": [_SQRT_DOWN, _SQRT_UP, _HYPER],
                "4": [_SQRT_DOWN, _SQRT_UP, _HYPER],
                "5": [_SQRT_DOWN, _SQRT_UP, _HYPER],
                "6": ["0"],
                "7": [],
            }
        ),
        certificates=frozenset({(4,)}),
    )
    labels = _labels(
        {
            "1.1": 0,
            **_cylinder_labels((0, 1, 0), ["2", "6"]),
            **_cylinder_labels((0, 1, 1, 1, 0, 0, 0), ["3", "4", "5"]),
            "7.1": 0,
        }
    )
    return GalleryEntry(
        name="disk-Cpp",
        cad=cad,
        formula=parse_formula(DISK_FORMULA),
        labels=labels,
        expected={
            "leaf_count": 29,
            "pivots": {"4", "3.6", "4.6", "5.6"},
            "has_minimum": True,
            "confluent": True,
            "minimal_count": 1,
            "minimum_leaf_count": 13,
            "edge_pivot": "4.6",
        },
        provenance={
            "leaf_count": "derived",
            "pivots": "derived",
            "has_minimum": "reported",
            "confluent": "derived",
            "minimal_count": "derived",
            "minimum_leaf_count": "derived",
            "edge_pivot": "reported",
        },
    )


TROUSERS_FORMULA = (
    "(or (and (or (le x1 0) (le x2 0)) (eq x3 0))"
    " (and (gt x1 0) (gt x2 0) (eq (add x3 (div x1 2)) 0)))"
)

USHAPE_FORMULA = (
    "(or (and (or (le x1 0) (le x2 0)) (le x3 0))"
    " (and (ge x1 0) (ge x2 0) (le (add x1 (mul x2 x3)) 0) (le x3 0)))"
)


def _bent_sheet_entries(
    prefix_name: str,
    formula_text: str,
    plain_slope: str,
    leaf_pattern: tuple[int, ...],
) -> tuple[GalleryEntry, GalleryEntry]:
    """The two minimal CADs for a sheet that is flat off the open positive
    quadrant and bends along ``plain_slope`` inside it."""
    guarded = (
        f"(piecewise ((and (gt x1 0) (gt x2 0)) {plain_slope}) (else 0))"
    )
    one_base = Cad(
        3,
        _stacks(
            {
                "": [],
                "1": ["0"],
                "1.1": [guarded],
                "1.2": [guarded],
                "1.3": [guarded],
            }
        ),
    )
    one_labels = _labels(_cylinder_labels(leaf_pattern, ["1.1", "1.2", "1.3"]))
    split_base = Cad(
        3,
        _stacks(
            {
                "": ["0"],
                "1": [],
                "2": [],
                "3": ["0"],
                "1.1": ["0"],
                "2.1": ["0"],
                "3.1": ["0"],
                "3.2": ["0"],
                "3.3": [plain_slope],
            }
        ),
    )
    split_labels = _labels(
        _cylinder_labels(leaf_pattern, ["1.1", "2.1", "3.1", "3.2", "3.3"])
    )
    formula = parse_formula(formula_text)
    first = GalleryEntry(
        name=f"{prefix_name}-C",
        cad=one_base,
        formula=formula,
        labels=one_labels,
        expected={"leaf_count": 9, "pivots": {"1.2"}, "minimize_fixed_point": True},
        provenance={
            "leaf_count": "reported",
            "pivots": "reported",
            "minimize_fixed_point": "reported",
        },
    )
    second = GalleryEntry(
        name=f"{prefix_name}-Cp",
        cad=split_base,
        formula=formula,
        labels=split_labels,
        expected={"leaf_count": 15, "pivots": {"3.2"}, "minimize_fixed_point": True},
        provenance={
            "leaf_count": "reported",
            "pivots": "reported",
            "minimize_fixed_point": "reported",
        },
    )
    return first, second


def trousers_c() -> GalleryEntry:
    return _bent_sheet_entries("trousers", TROUSERS_FORMULA, "(div (neg x1) 2)", (0, 1, 0))[0]


def trousers_cp() -> GalleryEntry:
    return _bent_sheet_entries("trousers", TROUSERS_FORMULA, "(div (neg x1) 2)", (0, 1, 0))[1]


def ushape_c() -> GalleryEntry:
    return _bent_sheet_entries("ushape", USHAPE_FORMULA, "(neg (div x1 x2))", (1, 1, 0))[0]


def ushape_cp() -> GalleryEntry:
    return _bent_sheet_entries("ushape", USHAPE_FORMULA, "(neg (div x1 x2))", (1, 1, 0))[1]


def _common_refinement_entry(name: str, a: GalleryEntry, b: GalleryEntry, expected: dict, provenance: dict) -> GalleryEntry:
    from cadreduce.poset import common_refinement

    cad, labels = common_refinement(a.cad, a.labels, b.cad, b.labels)
    return GalleryEntry(
        name=name,
        cad=cad,
        formula=a.formula,
        labels=labels,
        expected=expected,
        provenance=provenance,
    )


def trousers_cbar() -> GalleryEntry:
    return _common_refinement_entry(
        "trousers-Cbar",
        trousers_c(),
        trousers_cp(),
        expected={
            "leaf_count": 27,
            "minimal_count": 2,
            "has_minimum": False,
            "confluent": False,
        },
        provenance={
            "leaf_count": "derived",
            "minimal_count": "reported",
            "has_minimum": "reported",
            "confluent": "reported",
        },
    )


def ushape_cbar() -> GalleryEntry:
    return _common_refinement_entry(
        "ushape-Cbar",
        ushape_c(),
        ushape_cp(),
        expected={
            "leaf_count": 27,
            "minimal_count": 2,
            "has_minimum": False,
            "confluent": False,
        },
        provenance={
            "leaf_count": "derived",
            "minimal_count": "reported",
            "has_minimum": "reported",
            "confluent": "reported",
        },
    )


def _extended_entry(name: str, base: GalleryEntry, n: int, expected: dict, provenance: dict) -> GalleryEntry:
    from cadreduce.poset import extend_cylinder

    cad, labels = extend_cylinder(base.cad, base.labels, n)
    return GalleryEntry(
        name=name,
        cad=cad,
        formula=base.formula,
        labels=labels,
        expected=expected,
        provenance=provenance,
    )


def trousers4_c() -> GalleryEntry:
    return _extended_entry(
        "trousers4-C",
        trousers_c(),
        4,
        expected={"leaf_count": 9, "pivots": {"1.2"}, "minimize_fixed_point": True},
        provenance={
            "leaf_count": "reported",
            "pivots": "derived",
            "minimize_fixed_point": "reported",
        },
    )


def trousers4_cp() -> GalleryEntry:
    return _extended_entry(
        "trousers4-Cp",
        trousers_cp(),
        4,
        expected={"leaf_count": 15, "pivots": {"3.2"}, "minimize_fixed_point": True},
        provenance={
            "leaf_count": "reported",
            "pivots": "derived",
            "minimize_fixed_point": "reported",
        },
    )


def trousers4_cbar() -> GalleryEntry:
    return _common_refinement_entry(
        "trousers4-Cbar",
        trousers4_c(),
        trousers4_cp(),
        expected={
            "leaf_count": 27,
            "minimal_count": 2,
            "has_minimum": False,
            "confluent": False,
        },
        provenance={
            "leaf_count": "derived",
            "minimal_count": "reported",
            "has_minimum": "reported",
            "confluent": "reported",
        },
    )


_BUILDERS = {
    "disk-C": disk_c,
    "disk-Cp": disk_cp,
    "disk-Cpp": disk_cpp,
    "trousers-C": trousers_c,
    "trousers-Cp": trousers_cp,
    "trousers-Cbar": trousers_cbar,
    "trousers4-C": trousers4_c,
    "trousers4-Cp": trousers4_cp,
    "trousers4-Cbar": trousers4_cbar,
    "ushape-C": ushape_c,
    "ushape-Cp": ushape_cp,
    "ushape-Cbar": ushape_cbar,
}


def gallery_names() -> list[str]:
    return list(_BUILDERS)


def load_entry(name: str) -> GalleryEntry:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown gallery entry {name!r}; known: {', '.join(_BUILDERS)}") from None
    return builder()


def self_check(entry: GalleryEntry) -> list[str]:
    """Verify an entry's cheap structural facts; returns failure messages."""
    from cadreduce.cadmodel import check_adapted, validate_cad, word_of
    from cadreduce.tree import applicable_pivots, build_tree

    problems: list[str] = []
    report = validate_cad(entry.cad)
    if not report.ok:
        problems.append(f"validation: {report}")
    got_leaves = entry.cad.leaf_count()
    want_leaves = entry.expected.get("leaf_count")
    if want_leaves is not None and got_leaves != want_leaves:
        problems.append(f"leaf_count: got {got_leaves}, want {want_leaves}")
    labels = check_adapted(entry.cad, entry.formula)
    if labels != entry.labels:
        problems.append("check_adapted does not reproduce the stored labels")
    want_pivots = entry.expected.get("pivots")
    if want_pivots is not None:
        got = {word_of(p) for p in applicable_pivots(build_tree(entry.cad, entry.labels))}
        if got != want_pivots:
            problems.append(f"pivots: got {sorted(got)}, want {sorted(want_pivots)}")
    return problems
