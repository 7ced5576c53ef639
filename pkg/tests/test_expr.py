import random
from fractions import Fraction

import pytest

from cadreduce.errors import DivisionByZero, GuardUndecidable, ParseError, SqrtOfNegative
from cadreduce.expr import (
    Add,
    AlgebraicConst,
    Comparison,
    Const,
    Div,
    Mul,
    Neg,
    Piecewise,
    Pow,
    Sqrt,
    Sub,
    Var,
    atom_sign,
    canonical_formula,
    canonicalize,
    compare_coords,
    compare_on_samples,
    eval_coord,
    evaluate,
    fiber_formula,
    formula_holds,
    parse_expr,
    parse_formula,
    sexpr_of_expr,
    sexpr_of_formula,
)
from cadreduce.realroots import AlgebraicNumber, isolate_roots, poly

F = Fraction


def test_parse_print_roundtrip():
    for text in [
        "(div (neg x1) 2)",
        "(sqrt (sub 1 (pow x1 2)))",
        "(piecewise ((and (gt x1 0) (gt x2 0)) (div (neg x1) 2)) (else 0))",
        "(sub 1 (div 1 (mul 2 (sub (pow x1 2) 1))))",
        "5/2",
        "-3",
    ]:
        e = parse_expr(text)
        assert parse_expr(sexpr_of_expr(e)) == e


def test_parse_formula_roundtrip():
    for text in [
        "(le (sub (add (pow x1 2) (pow x2 2)) 1) 0)",
        "(or (and (or (le x1 0) (le x2 0)) (eq x3 0)) (and (gt x1 0) (gt x2 0) (eq (add x3 (div x1 2)) 0)))",
        "(true)",
        "(not (lt x1 0))",
    ]:
        f = parse_formula(text)
        assert parse_formula(sexpr_of_formula(f)) == f


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_expr("(add x1)")
    with pytest.raises(ParseError):
        parse_expr("(frobnicate 1 2)")
    with pytest.raises(ParseError):
        parse_expr("(add 1 2))")
    with pytest.raises(ParseError):
        parse_formula("(lt (sqrt x1) 0)")  # non-polynomial atom


def test_eval_trousers_section_at_positive_quadrant():
    # The guarded section -x/2 on {x>0, y>0}, 0 elsewhere, at (1, 1).
    e = parse_expr("(piecewise ((and (gt x1 0) (gt x2 0)) (div (neg x1) 2)) (else 0))")
    assert evaluate(e, [F(1), F(1)]).value == F(-1, 2)
    assert evaluate(e, [F(-1), F(2)]).value == 0
    assert evaluate(e, [F(0), F(5)]).value == 0


def test_eval_disk_upper_section_identity():
    e = parse_expr("(sqrt (sub 1 (pow x1 2)))")
    assert evaluate(e, [F(0)]).value == 1


def test_eval_hyperbola_like_function_at_zero():
    # 1 - (2(x^2-1))^{-1} at x = 0 evaluates to 3/2.
    e = parse_expr("(sub 1 (div 1 (mul 2 (sub (pow x1 2) 1))))")
    assert evaluate(e, [F(0)]).value == F(3, 2)


def test_eval_interval_for_irrational():
    e = parse_expr("(sqrt (sub 1 (pow x1 2)))")
    v = evaluate(e, [F(1, 2)], precision=F(1, 1000))
    assert not v.is_exact
    assert v.width <= F(1, 1000)
    # sqrt(3)/2 = 0.8660...
    assert v.lo < F(8661, 10000) and v.hi > F(8659, 10000)


def test_eval_monotone_in_precision():
    e = parse_expr("(sqrt 2)")
    coarse = evaluate(e, [], precision=F(1, 2**10))
    fine = evaluate(e, [], precision=F(1, 2**30))
    assert coarse.lo <= fine.lo and fine.hi <= coarse.hi
    again = evaluate(e, [], precision=F(1, 2**10))
    assert again == coarse  # deterministic


def test_eval_division_by_zero():
    e = parse_expr("(div 1 (sub (pow x1 2) 1))")
    with pytest.raises(DivisionByZero):
        evaluate(e, [F(1)])


def test_eval_sqrt_of_negative():
    e = parse_expr("(sqrt (sub 1 (pow x1 2)))")
    with pytest.raises(SqrtOfNegative):
        evaluate(e, [F(2)])


def test_eval_guard_undecidable_without_else():
    e = parse_expr("(piecewise ((gt x1 0) 1))")
    with pytest.raises(GuardUndecidable):
        evaluate(e, [F(-1)])


def test_canonicalize_collects_terms():
    e = parse_expr("(sub (mul x1 2) x1)")
    assert canonicalize(e) == Var(1)


def test_canonicalize_no_pole_cancellation():
    e = parse_expr("(div (sub (pow x1 2) 1) (sub x1 1))")
    c = canonicalize(e)
    assert isinstance(c, Div)
    # Both sides keep their degrees: no cancellation across the pole at 1.
    assert canonicalize(c) == c


def test_canonicalize_combines_fractions_domain_preserving():
    e1 = parse_expr("(sub 1 (div 1 (mul 2 (sub (pow x1 2) 1))))")
    e2 = parse_expr("(div (sub (mul 2 (pow x1 2)) 3) (sub (mul 2 (pow x1 2)) 2))")
    assert canonicalize(e1) == canonicalize(e2)


def test_canonicalize_piecewise_keeps_guard():
    e = parse_expr("(piecewise ((gt x1 0) (div (neg x1) 2)) (else 0))")
    c = canonicalize(e)
    assert isinstance(c, Piecewise)
    assert c.default is not None


def test_canonicalize_idempotent_on_random_corpus():
    rng = random.Random(421)

    def gen(depth: int):
        if depth == 0:
            k = rng.randrange(3)
            if k == 0:
                return Const(F(rng.randint(-5, 5)))
            if k == 1:
                return Var(rng.randint(1, 3))
            return Const(F(rng.randint(1, 7), rng.randint(1, 7)))
        k = rng.randrange(8)
        if k < 2:
            return Add(gen(depth - 1), gen(depth - 1))
        if k < 4:
            return Mul(gen(depth - 1), gen(depth - 1))
        if k == 4:
            return Sub(gen(depth - 1), gen(depth - 1))
        if k == 5:
            return Neg(gen(depth - 1))
        if k == 6:
            return Pow(gen(depth - 1), rng.randrange(4))
        return Div(gen(depth - 1), gen(depth - 1))

    checked = 0
    for _ in range(200):
        e = gen(3)
        try:
            c = canonicalize(e)
        except DivisionByZero:
            continue
        assert canonicalize(c) == c
        checked += 1
    assert checked > 100


def test_compare_on_samples_equal_by_canonical_form():
    e1 = parse_expr("(add x1 x1)")
    e2 = parse_expr("(mul 2 x1)")
    assert compare_on_samples(e1, e2, [(F(7),)]) == Comparison.EQUAL


def test_compare_on_samples_separates_disk_sections():
    up = parse_expr("(sqrt (sub 1 (pow x1 2)))")
    down = parse_expr("(neg (sqrt (sub 1 (pow x1 2))))")
    assert compare_on_samples(up, down, [(F(0),)]) == Comparison.NOT_EQUAL


def test_compare_on_samples_escalates_with_better_sample():
    e1 = parse_expr("(sqrt (sub 1 (pow x1 2)))")
    e2 = parse_expr("(sub 1 (div (pow x1 2) 2))")
    # At x=0 both are exactly 1; inconclusive overall for lazy-vs-exact pairs.
    r0 = compare_on_samples(e1, e2, [(F(0),)])
    assert r0 in (Comparison.EQUAL, Comparison.UNKNOWN)
    # x=1/2 separates sqrt(3)/2 from 7/8.
    assert compare_on_samples(e1, e2, [(F(0),), (F(1, 2),)]) == Comparison.NOT_EQUAL


def test_compare_on_samples_never_equal_when_sample_separates():
    rng = random.Random(99)
    for _ in range(100):
        a, b = rng.randint(-4, 4), rng.randint(-4, 4)
        e1 = parse_expr(f"(add (mul {a} x1) {b})")
        e2 = parse_expr(f"(add (mul {a} x1) {b + rng.randint(1, 3)})")
        samples = [(F(rng.randint(-5, 5)),)]
        assert compare_on_samples(e1, e2, samples) == Comparison.NOT_EQUAL


def test_formula_holds_exact():
    disk = parse_formula("(le (sub (add (pow x1 2) (pow x2 2)) 1) 0)")
    assert formula_holds(disk, [F(0), F(0)])
    assert formula_holds(disk, [F(1), F(0)])
    assert not formula_holds(disk, [F(1), F(1)])


def test_formula_holds_at_algebraic_point():
    # x^2 - 2 <= 0 exactly at sqrt(2).
    f = parse_formula("(le (sub (pow x1 2) 2) 0)")
    sqrt2 = isolate_roots(poly([-2, 0, 1]))[1]
    assert formula_holds(f, [sqrt2])
    g = parse_formula("(lt (sub (pow x1 2) 2) 0)")
    assert not formula_holds(g, [sqrt2])


def test_atom_sign_with_algebraic_coordinate():
    sqrt2 = isolate_roots(poly([-2, 0, 1]))[1]
    lhs = parse_expr("(sub (pow x2 2) (mul 2 (pow x1 2)))")  # y^2 - 2x^2
    assert atom_sign(lhs, [F(1), sqrt2]) == 0
    assert atom_sign(lhs, [F(1), F(3, 2)]) == 1


def test_eval_coord_returns_algebraic_for_sqrt():
    e = parse_expr("(sqrt (sub 1 (pow x1 2)))")
    v = eval_coord(e, [F(1, 2)])
    assert isinstance(v, AlgebraicNumber)
    neg = eval_coord(parse_expr("(neg (sqrt (sub 1 (pow x1 2))))"), [F(1, 2)])
    assert isinstance(neg, AlgebraicNumber)
    assert compare_coords(neg, v) == -1


def test_canonical_formula_scales_and_flips():
    f1 = parse_formula("(lt (neg x1) 0)")
    f2 = parse_formula("(gt (mul 2 x1) 0)")
    assert canonical_formula(f1) == canonical_formula(f2)


def test_canonical_formula_flattens_and_sorts():
    f1 = parse_formula("(and (gt x1 0) (and (gt x2 0) (gt x1 0)))")
    f2 = parse_formula("(and (gt x2 0) (gt x1 0))")
    assert canonical_formula(f1) == canonical_formula(f2)


def test_fiber_formula():
    trousers = parse_formula(
        "(or (and (or (le x1 0) (le x2 0)) (eq x3 0))"
        " (and (gt x1 0) (gt x2 0) (eq (add x3 (div x1 2)) 0)))"
    )
    fib = fiber_formula(trousers, [F(2), F(3)])
    # Over the base point (2, 3) the fiber is {z = -1}.
    assert formula_holds(fib, [F(-1)])
    assert not formula_holds(fib, [F(0)])
    assert not formula_holds(fib, [F(1)])
