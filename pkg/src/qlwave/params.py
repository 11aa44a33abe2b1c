"""Experiment parameters and the error types shared across the package."""

from dataclasses import dataclass, asdict, replace
import math


class ParameterError(ValueError):
    """A parameter tuple violates an admissibility constraint."""


class DomainError(ValueError):
    """A function was evaluated outside the set where it is defined."""


class NoBlowupError(RuntimeError):
    """No degeneracy of the characteristic map was found."""


class SingularityError(RuntimeError):
    """The characteristic speed (1+v)/(1-v) became singular (v -> 1)."""


class ResolutionError(RuntimeError):
    """The requested quantity cannot be resolved from the available samples."""


class FitWindowError(ValueError):
    """A rate fit was requested on a series with insufficient span."""


@dataclass(frozen=True)
class ModelParams:
    """The tuple (eps, alpha, beta, delta, c, lam) of one experiment.

    ``eps`` is the mollification scale, ``alpha`` the log exponent of the
    initial slope, ``beta`` the log-Sobolev weight, ``delta`` the exponent
    shaping the initial domain, ``c`` the linear ODE coefficient (0 gives the
    model equation) and ``lam`` the norm regularization.
    """

    eps: float = 0.01
    alpha: float = 0.5
    beta: float = 1.0
    delta: float = 0.5
    c: float = 0.2
    lam: float = 0.05

    def __post_init__(self):
        for name in ("eps", "alpha", "beta", "delta", "c", "lam"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(f"{name} must be a finite real, got {value!r}")
        if not 0.0 < self.eps <= 0.25:
            raise ParameterError(f"eps must satisfy 0 < eps <= 0.25, got eps={self.eps}")
        if not self.alpha > 0.0:
            raise ParameterError(f"alpha must satisfy alpha > 0, got alpha={self.alpha}")
        if not self.delta > 0.0:
            raise ParameterError(f"delta must satisfy delta > 0, got delta={self.delta}")
        if not self.beta > 0.5:
            raise ParameterError(f"beta must satisfy beta > 1/2, got beta={self.beta}")
        if not 2.0 * self.alpha - 2.0 * self.beta - self.delta < -1.0:
            raise ParameterError(
                "admissibility 2*alpha - 2*beta - delta < -1 violated: "
                f"2*{self.alpha} - 2*{self.beta} - {self.delta} = "
                f"{2.0 * self.alpha - 2.0 * self.beta - self.delta}"
            )
        if not 0.0 <= self.lam < 0.125:
            raise ParameterError(f"lambda must satisfy 0 <= lambda < 1/8, got lambda={self.lam}")

    @property
    def log_scale(self):
        """|ln eps|^alpha, the size of the initial slope near eps."""
        return abs(math.log(self.eps)) ** self.alpha

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)
