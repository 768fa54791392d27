"""Exception hierarchy shared by all featmap stages."""


class FeatmapError(Exception):
    """Base class for every error raised by featmap."""


class ParameterError(FeatmapError, ValueError):
    """An argument is outside its admissible range."""


class DataError(FeatmapError, ValueError):
    """Input data is malformed (non-finite values, bad shapes, parse failures)."""


class DegenerateFrameError(FeatmapError, ArithmeticError):
    """A local neighbourhood or frame carries no usable variance."""


class GraphError(FeatmapError, KeyError):
    """A requested edge is not part of the neighbourhood graph."""


class OptimizationDiverged(FeatmapError, FloatingPointError):
    """SGD produced a non-finite update."""

    def __init__(self, stage, epoch, detail=""):
        self.stage = stage
        self.epoch = epoch
        msg = f"{stage} diverged at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class UnsupportedDimension(FeatmapError, ValueError):
    """Operation only defined for a specific embedding dimension."""
