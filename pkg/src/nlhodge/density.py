"""Energy density models rho(Q), their integrals e(Q), and ellipticity.

Three closed-form models are built in:

* ``constant``     rho = 1 (linear Hodge / Dirichlet energy)
* ``polytropic``   rho = (1 - (gamma-1) Q / 2) ** (1/(gamma-1)), steady ideal gas
* ``born_infeld``  rho = (1 + Q) ** -1/2

All functions accept scalars or numpy arrays and return the same shape.
Anything that exposes ``rho``, ``rho_prime``, ``e``, ``q_sonic`` and
``q_cavitation`` (see :class:`Density`) can be used where a model is
expected; only the three built-ins ship.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from nlhodge.errors import DensityDomainError

KINDS = ("constant", "polytropic", "born_infeld")

#: |rho + 2 Q rho'| below this counts as degenerate.
ELLIPTICITY_EPS = 1e-12


@runtime_checkable
class Density(Protocol):
    """Extension point for user-supplied densities."""

    q_sonic: float
    q_cavitation: float

    def rho(self, Q): ...

    def rho_prime(self, Q): ...

    def e(self, Q): ...


@dataclass(frozen=True)
class DensityModel:
    """Immutable record describing one of the built-in densities.

    ``gamma`` is only meaningful for ``kind="polytropic"`` and must exceed 1.
    """

    kind: str = "constant"
    gamma: float = 1.4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "polytropic" and not self.gamma > 1.0:
            raise ValueError(f"polytropic density needs gamma > 1, got {self.gamma}")

    @classmethod
    def from_config(cls, cfg: dict) -> "DensityModel":
        return cls(kind=cfg.get("kind", "constant"), gamma=float(cfg.get("gamma", 1.4)))

    # -- thresholds ---------------------------------------------------------

    @property
    def q_sonic(self) -> float:
        """Q at which rho + 2 Q rho' vanishes."""
        if self.kind == "polytropic":
            return 2.0 / (self.gamma + 1.0)
        return math.inf

    @property
    def q_cavitation(self) -> float:
        """Q at which rho vanishes."""
        if self.kind == "polytropic":
            return 2.0 / (self.gamma - 1.0)
        return math.inf

    @property
    def name(self) -> str:
        if self.kind == "polytropic":
            return f"polytropic(gamma={self.gamma:g})"
        return self.kind

    def _check(self, Q):
        Q = np.asarray(Q, dtype=float)
        if np.any(Q < 0) or np.any(np.isnan(Q)):
            raise DensityDomainError("Q must be nonnegative")
        if np.any(Q >= self.q_cavitation):
            raise DensityDomainError(
                f"Q={float(np.max(Q)):.6g} reaches the cavitation value {self.q_cavitation:.6g}"
            )
        return Q

    @staticmethod
    def _out(Q_in, value):
        return float(value) if np.ndim(Q_in) == 0 else value

    # -- closed forms -------------------------------------------------------

    def rho(self, Q):
        q = self._check(Q)
        if self.kind == "constant":
            out = np.ones_like(q)
        elif self.kind == "born_infeld":
            out = 1.0 / np.sqrt(1.0 + q)
        else:
            g = self.gamma
            out = np.exp(np.log1p(-0.5 * (g - 1.0) * q) / (g - 1.0))
        return self._out(Q, out)

    def rho_prime(self, Q):
        q = self._check(Q)
        if self.kind == "constant":
            out = np.zeros_like(q)
        elif self.kind == "born_infeld":
            out = -0.5 * (1.0 + q) ** -1.5
        else:
            g = self.gamma
            # d/dQ (1-aQ)^(1/(g-1)) = -(1/2) (1-aQ)^((2-g)/(g-1))
            out = -0.5 * np.exp((2.0 - g) / (g - 1.0) * np.log1p(-0.5 * (g - 1.0) * q))
        return self._out(Q, out)

    def e(self, Q):
        """Integrated density e(Q) = int_0^Q rho(s) ds."""
        q = self._check(Q)
        if self.kind == "constant":
            out = q.copy()
        elif self.kind == "born_infeld":
            # 2(sqrt(1+Q) - 1) without cancellation at small Q
            out = 2.0 * q / (np.sqrt(1.0 + q) + 1.0)
        else:
            g = self.gamma
            out = -(2.0 / g) * np.expm1(g / (g - 1.0) * np.log1p(-0.5 * (g - 1.0) * q))
        return self._out(Q, out)

    def ellipticity_value(self, Q):
        """rho + 2 Q rho', in factored form so the sonic root is hit cleanly."""
        q = self._check(Q)
        if self.kind == "constant":
            out = np.ones_like(q)
        elif self.kind == "born_infeld":
            out = (1.0 + q) ** -1.5
        else:
            g = self.gamma
            a = 0.5 * (g - 1.0)
            base = np.exp((2.0 - g) / (g - 1.0) * np.log1p(-a * q))
            out = base * (1.0 - (a + 1.0) * q)
        return self._out(Q, out)

    def ellipticity(self, Q, eps: float = ELLIPTICITY_EPS):
        """Return ``(rho + 2Q rho', class)`` with class elliptic/degenerate/violated."""
        value = self.ellipticity_value(Q)
        return value, classify_ellipticity(value, eps)

    def kappa_bounds(self, q_max: float) -> tuple[float, float]:
        """Uniform ellipticity constants (kappa_1, kappa_2) on [0, q_max].

        Every built-in has a nonincreasing ellipticity value, so the bounds
        are the endpoint values.
        """
        if not 0.0 <= q_max < self.q_cavitation:
            raise DensityDomainError(f"q_max={q_max} outside [0, {self.q_cavitation})")
        return float(self.ellipticity_value(q_max)), float(self.ellipticity_value(0.0))


def classify_ellipticity(value, eps: float = ELLIPTICITY_EPS):
    v = np.asarray(value, dtype=float)
    cls = np.where(v > eps, "elliptic", np.where(v < -eps, "violated", "degenerate"))
    return str(cls) if cls.ndim == 0 else cls


def rho(model, Q):
    return model.rho(Q)


def rho_prime(model, Q):
    return model.rho_prime(Q)


def e_density(model, Q):
    return model.e(Q)


def ellipticity(model, Q, eps: float = ELLIPTICITY_EPS):
    return model.ellipticity(Q, eps)
