"""Exception hierarchy shared by the model, the collapsed network and the harness."""


class FrontContributionError(Exception):
    """Base class for every error raised by this package."""


class DegenerateConstant(FrontContributionError):
    """A frozen reference activation is zero, so a compensation would divide by zero."""


class ZeroErrorSingularity(FrontContributionError):
    """The ActiveDead closed form divides by the error derivative, which is zero."""


class UnsupportedBranch(FrontContributionError):
    """A gate pattern (or vanishing denominator) for which no compensation formula exists."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateInit(FrontContributionError):
    """Seeded resampling never produced non-zero reference activations."""


class OutputError(FrontContributionError):
    """Writing a CSV or SVG artifact failed."""

    def __init__(self, path, cause):
        super().__init__(f"cannot write {path}: {cause}")
        self.path = path
