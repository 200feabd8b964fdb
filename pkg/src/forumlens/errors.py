"""Exception types shared across the toolkit."""


class ForumlensError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ForumlensError):
    """An input file could not be parsed."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class InvariantViolation(ForumlensError):
    """A data-model invariant does not hold."""

    def __init__(self, subject: str, reason: str):
        self.subject = subject
        self.reason = reason
        super().__init__(f"{subject}: {reason}")


class EmptyCorpus(ForumlensError):
    """An operation that needs tokens received none."""


class MissingClass(ForumlensError):
    """A classifier was asked to train without both classes present."""

    def __init__(self, course_id: str | None = None):
        self.course_id = course_id
        where = course_id if course_id is not None else "training set"
        super().__init__(f"both classes required, missing one in {where}")


class DomainMismatch(ForumlensError):
    """Two rankings/models do not cover a common domain."""


class RankDeficient(ForumlensError):
    """A regression design matrix is not of full column rank."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"rank-deficient design, offending columns: {self.columns}")


class DegenerateDesign(ForumlensError):
    """Not enough (or degenerate) data to fit a model."""


class DegenerateGroup(ForumlensError):
    """A two-sample test group is too small."""


class SampleSizeError(ForumlensError):
    """Sample size outside the supported range of a statistical routine."""


class ConfigError(ForumlensError):
    """Invalid run configuration."""
