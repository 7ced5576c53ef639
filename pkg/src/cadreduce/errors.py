"""Exception types shared across the package."""


class CadError(Exception):
    """Base class for all library errors."""


class DivisionByZero(CadError):
    """Expression evaluation divided by an exact zero."""


class SqrtOfNegative(CadError):
    """Expression evaluation took the square root of a negative value."""


class GuardUndecidable(CadError):
    """A sign or piecewise guard could not be decided at the working precision."""


class NotAdapted(CadError):
    """A leaf cell straddles the defining set: two samples disagree."""

    def __init__(self, leaf, point_in, point_out):
        super().__init__(f"cell {leaf} meets both the set and its complement")
        self.leaf = leaf
        self.point_in = point_in
        self.point_out = point_out


class LabelMissing(CadError):
    """A leaf has no label."""


class PivotNotEven(CadError):
    """A merge pivot must be a nonempty index with even last letter."""


class RuleNotApplicable(CadError):
    """The requested pivot does not satisfy the merge condition."""


class SectionOutOfRange(CadError):
    """A section to insert is not strictly inside the target sector."""


class SectionsCross(CadError):
    """Two sections from different CADs cross inside a merged cell."""


class UnknownOrder(CadError):
    """Interval comparison of two section values was inconclusive."""


class UnknownEvidence(CadError):
    """Equality/continuity evidence was inconclusive and the mode forbids acceptance."""


class NotComparableRepresentation(CadError):
    """A CAD could not be represented as a coarsening of the requested root."""


class ParseError(CadError):
    """Malformed s-expression or CAD document."""


class ValidationFailed(CadError):
    """A parsed CAD document violated structural validation."""

    def __init__(self, report):
        super().__init__(str(report))
        self.report = report
