"""Run configuration with the published training defaults."""

import os
from dataclasses import asdict, dataclass, field, fields

from .errors import ParameterError


@dataclass
class RunConfig:
    k: int = 15
    d_prime: int = 2
    d_max: int = 8
    epochs: int = 500
    q: float = 0.3
    lam: float = 0.5
    min_dist: float = 0.1
    neg_samples: int = 5
    tau: float = 0.9
    seed: int = 42
    threads: int = 1
    input: str | None = None
    output: str | None = None
    format: str = "csv"
    label_column: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self, m=None):
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if m is not None and self.k >= m:
            raise ParameterError(f"k={self.k} must be smaller than the number of points {m}")
        if self.d_prime < 1:
            raise ParameterError(f"dim must be >= 1, got {self.d_prime}")
        if self.d_max < 1:
            raise ParameterError(f"d_max must be >= 1, got {self.d_max}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.q <= 1.0:
            raise ParameterError(f"q must lie in [0, 1], got {self.q}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.min_dist <= 0:
            raise ParameterError(f"min_dist must be > 0, got {self.min_dist}")
        if self.neg_samples < 0:
            raise ParameterError(f"neg_samples must be >= 0, got {self.neg_samples}")
        if not 0.0 < self.tau <= 1.0:
            raise ParameterError(f"tau must lie in (0, 1], got {self.tau}")
        if self.threads < 1:
            raise ParameterError(f"threads must be >= 1, got {self.threads}")
        return self

    @property
    def frame_epochs(self):
        return int(round(self.q * self.epochs))

    def effective_threads(self):
        env = os.environ.get("FEATMAP_THREADS")
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ParameterError(f"FEATMAP_THREADS must be an integer, got {env!r}") from None
        return self.threads

    def echo(self):
        """JSON-friendly copy; the density weight is reported as ``lambda``."""
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d.pop("extra")
        return d

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
