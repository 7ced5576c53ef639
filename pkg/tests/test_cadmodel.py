from fractions import Fraction

import pytest

from cadreduce.cadmodel import (
    Cad,
    SectionStack,
    check_adapted,
    coarsening_blocks,
    locate,
    parse_word,
    partition_refines,
    refines,
    validate_cad,
    word_of,
)
from cadreduce.errors import NotAdapted
from cadreduce.expr import parse_expr, parse_formula
from cadreduce.gallery import disk_c, disk_cp, disk_cpp, trousers_c, trousers_cp, ushape_c, ushape_cp

F = Fraction


def single_chain(n: int, label: int = 1):
    """The trivial CAD of R^n with one cell per level."""
    stacks = {}
    for k in range(n):
        stacks[tuple([1] * k)] = SectionStack(())
    cad = Cad(n, stacks)
    return cad, {tuple([1] * n): label}


def test_word_roundtrip():
    for w in ["", "1", "1.2", "10.3.2"]:
        assert word_of(parse_word(w)) == w
    with pytest.raises(ValueError):
        parse_word("0.1")
    with pytest.raises(ValueError):
        parse_word("a.b")


def test_disk_c_is_valid_and_has_13_leaves():
    entry = disk_c()
    report = validate_cad(entry.cad)
    assert report.ok, str(report)
    assert entry.cad.leaf_count() == 13
    sizes = [len([l for l in entry.cad.leaves() if l[0] == i]) for i in range(1, 6)]
    assert sizes == [1, 3, 5, 3, 1]


def test_disk_cp_structure():
    entry = disk_cp()
    assert validate_cad(entry.cad).ok
    assert entry.cad.leaf_count() == 23
    sizes = [len([l for l in entry.cad.leaves() if l[0] == i]) for i in range(1, 8)]
    assert sizes == [1, 3, 5, 5, 5, 3, 1]


def test_trousers_leaf_counts():
    assert trousers_c().cad.leaf_count() == 9
    assert trousers_cp().cad.leaf_count() == 15
    assert validate_cad(trousers_c().cad).ok
    assert validate_cad(trousers_cp().cad).ok


def test_single_chain_leaf_count():
    cad, _ = single_chain(3)
    assert cad.leaf_count() == 1
    assert validate_cad(cad).ok


def test_unordered_stack_is_flagged():
    cad = Cad(
        1,
        {(): SectionStack((parse_expr("1"), parse_expr("1")))},
    )
    report = validate_cad(cad)
    assert not report.ok
    assert any("not strictly ordered" in v for v in report.violations)


def test_check_adapted_disk():
    entry = disk_c()
    labels = check_adapted(entry.cad, entry.formula)
    assert labels == entry.labels


def test_check_adapted_trousers_sections_only():
    entry = trousers_c()
    labels = check_adapted(entry.cad, entry.formula)
    assert labels == entry.labels
    # Exactly the three sections are inside the set.
    inside = {leaf for leaf, v in labels.items() if v == 1}
    assert inside == {(1, 1, 2), (1, 2, 2), (1, 3, 2)}


def test_check_adapted_ushape():
    for entry in (ushape_c(), ushape_cp()):
        assert validate_cad(entry.cad).ok
        assert check_adapted(entry.cad, entry.formula) == entry.labels


def test_check_adapted_whole_space():
    cad, _ = single_chain(2)
    labels = check_adapted(cad, parse_formula("(lt 0 1)"))
    assert labels == {(1, 1): 1}


def test_check_adapted_rejects_straddling_cell():
    # One cell over the line, but the set is a half line: probes disagree.
    cad, _ = single_chain(1)
    with pytest.raises(NotAdapted):
        check_adapted(cad, parse_formula("(gt x1 1/7)"), probes=4)


def test_check_adapted_label_stable_with_more_probes():
    for entry in (disk_c(), trousers_cp()):
        few = check_adapted(entry.cad, entry.formula, probes=1)
        many = check_adapted(entry.cad, entry.formula, probes=6)
        assert few == many


def test_locate_roundtrip_samples():
    for entry in (disk_c(), disk_cp(), trousers_c(), trousers_cp()):
        cad = entry.cad
        for leaf in cad.leaves():
            assert locate(cad, cad.sample(leaf)) == leaf


def test_locate_interior_point_of_disk():
    entry = disk_c()
    assert locate(entry.cad, [F(0), F(0)]) == (3, 3)
    assert locate(entry.cad, [F(0), F(-1)]) == (3, 2)
    assert locate(entry.cad, [F(2), F(5)]) == (5, 1)


def test_refines_disk_pair():
    fine, coarse = disk_cp(), disk_c()
    assert refines(fine.cad, coarse.cad, fine.cad)
    # And a CAD refines itself.
    assert refines(fine.cad, fine.cad, fine.cad)


def test_refines_is_partial_order_like_on_disk():
    cpp = disk_cpp().cad
    c = disk_c().cad
    cp = disk_cp().cad
    assert refines(cpp, cp, cpp) and refines(cpp, c, cpp) and refines(cp, c, cpp)


def test_partition_refines_basics():
    fine = frozenset({frozenset({1}), frozenset({2}), frozenset({3})})
    coarse = frozenset({frozenset({1, 2}), frozenset({3})})
    other = frozenset({frozenset({1, 3}), frozenset({2})})
    assert partition_refines(fine, coarse)
    assert not partition_refines(coarse, other)
    assert partition_refines(coarse, coarse)


def test_coarsening_blocks_by_embedding():
    root = disk_cp().cad
    blocks = coarsening_blocks(disk_c().cad, root)
    assert len(blocks) == 13
    # The merged cylinder over (-1,1) has three base pieces per cell.
    widths = sorted(len(b) for b in blocks)
    assert widths == [1, 1, 1, 1, 1, 1, 1, 1, 3, 3, 3, 3, 3]


def test_cell_points_are_inside_their_cell():
    entry = disk_cp()
    cad = entry.cad
    for leaf in cad.leaves():
        for point, tag in cad.cell_points(leaf, 4):
            assert tag == leaf
            assert locate(cad, point) == leaf


def test_cylindricity_of_indices():
    cad = disk_cpp().cad
    for k in range(1, cad.n + 1):
        level = set(cad.cells_of_level(k - 1))
        for cell in cad.cells_of_level(k):
            assert cell[:-1] in level


def test_distinct_leaf_samples_in_distinct_leaves():
    cad = trousers_cp().cad
    seen = {}
    for leaf in cad.leaves():
        pt = cad.sample(leaf)
        assert pt not in seen
        seen[pt] = leaf
