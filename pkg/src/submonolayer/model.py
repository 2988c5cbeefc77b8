"""Model parameters and initial data for the critical-size deposition system."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np


class ValidationError(ValueError):
    """Raised when model parameters or initial data are out of range."""


@dataclass(frozen=True)
class ModelParams:
    """Critical cluster size ``n`` and monomer deposition rate ``alpha``."""

    n: int
    alpha: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"critical size n must be an integer >= 2, got {self.n!r}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValidationError(f"alpha must be positive and finite, got {self.alpha!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True)
class MonomerOnly:
    """No clusters of size >= n at t = 0."""


@dataclass(frozen=True)
class PowerLaw:
    """c_j(0) = rho * j**(-mu) for n <= j <= K_cut, zero beyond."""

    rho: float
    mu: float
    K_cut: int


@dataclass(frozen=True)
class Explicit:
    """Finite list of (j, c_j(0)) pairs."""

    entries: tuple = ()


Tail = Union[MonomerOnly, PowerLaw, Explicit]


@dataclass(frozen=True)
class InitialData:
    """Initial monomer value plus a finitely described cluster tail.

    ``n`` is carried along so the tail can be validated and enumerated
    without a separate ModelParams.
    """

    n: int
    c1_0: float = 0.0
    tail: Tail = field(default_factory=MonomerOnly)

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("n must be >= 2")
        if not (self.c1_0 >= 0 and math.isfinite(self.c1_0)):
            raise ValidationError(f"c1_0 must be finite and >= 0, got {self.c1_0!r}")
        tail = self.tail
        if isinstance(tail, PowerLaw):
            if not tail.rho > 0 or not tail.mu > 0:
                raise ValidationError("power-law tail needs rho > 0 and mu > 0")
            if int(tail.K_cut) != tail.K_cut or tail.K_cut < self.n:
                raise ValidationError(f"K_cut must be an integer >= n = {self.n}")
        elif isinstance(tail, Explicit):
            seen = set()
            for j, c in tail.entries:
                if int(j) != j or j < self.n:
                    raise ValidationError(f"explicit entry index {j} must be an integer >= n")
                if not (c >= 0 and math.isfinite(c)):
                    raise ValidationError(f"explicit entry c_{j}(0) = {c} must be finite and >= 0")
                if j in seen:
                    raise ValidationError(f"duplicate explicit entry j = {j}")
                seen.add(j)
        elif not isinstance(tail, MonomerOnly):
            raise ValidationError(f"unknown tail type {type(tail).__name__}")

    @property
    def j_max(self) -> int:
        """Largest index carrying a (possibly) nonzero concentration; n - 1 if none."""
        tail = self.tail
        if isinstance(tail, PowerLaw):
            return int(tail.K_cut)
        if isinstance(tail, Explicit) and tail.entries:
            return int(max(j for j, _ in tail.entries))
        return self.n - 1

    def support(self, j_upper: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Indices k >= n with c_k(0) > 0 (optionally k <= j_upper) and their values."""
        tail = self.tail
        hi = self.j_max if j_upper is None else min(self.j_max, int(j_upper))
        if isinstance(tail, PowerLaw):
            k = np.arange(self.n, hi + 1, dtype=np.int64)
            return k, tail.rho * k.astype(float) ** (-tail.mu)
        if isinstance(tail, Explicit):
            pairs = sorted((int(j), float(c)) for j, c in tail.entries if j <= hi and c > 0)
            if not pairs:
                return np.zeros(0, dtype=np.int64), np.zeros(0)
            k, c = zip(*pairs)
            return np.array(k, dtype=np.int64), np.array(c, dtype=float)
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    def c0(self, j: int) -> float:
        """c_j(0) for a single j >= n."""
        if j < self.n:
            raise ValidationError(f"c0 is defined for j >= n, got j = {j}")
        tail = self.tail
        if isinstance(tail, PowerLaw):
            return tail.rho * float(j) ** (-tail.mu) if j <= tail.K_cut else 0.0
        if isinstance(tail, Explicit):
            for k, c in tail.entries:
                if k == j:
                    return float(c)
        return 0.0

    def as_vector(self, J: int) -> np.ndarray:
        """Dense array ``[c_n(0), ..., c_J(0)]``."""
        out = np.zeros(J - self.n + 1)
        k, c = self.support(J)
        out[k - self.n] = c
        return out


def monomer_only(params: ModelParams, c1_0: float = 0.0) -> InitialData:
    return InitialData(n=params.n, c1_0=c1_0, tail=MonomerOnly())


def make_power_law(rho: float, mu: float, K_cut: int, params: ModelParams, c1_0: float = 0.0) -> InitialData:
    """Truncated power-law tail ``c_j(0) = rho * j**-mu`` for ``n <= j <= K_cut``."""
    return InitialData(n=params.n, c1_0=c1_0, tail=PowerLaw(float(rho), float(mu), int(K_cut)))


def make_explicit(entries: Iterable, params: ModelParams, c1_0: float = 0.0) -> InitialData:
    entries = tuple((int(j), float(c)) for j, c in entries)
    return InitialData(n=params.n, c1_0=c1_0, tail=Explicit(entries))


def nu0(data: InitialData) -> float:
    """Total initial cluster count sum_{k >= n} c_k(0)."""
    _, c = data.support()
    return math.fsum(c.tolist())
