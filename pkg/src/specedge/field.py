"""Doubly-exponential potential fields: tail spec, exact sampling, quantiles, density.

The upper tail is P(xi > r) = exp(-e^{F(r)}) with F(r) = r/rho for the exact
kind, or F(r) = r/rho + g(r) for a small catalog of closed-form perturbations
with g' -> 0.  All tail arithmetic is done in log space; e^{r/rho} overflows
long before the quantities of interest degenerate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .lattice import LatticeDomain

_PHI = np.uint64(0x9E3779B97F4A7C15)
_CTR = np.uint64(0xC2B2AE3D27D4EB4F)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_KEY_INT = 0xD1342543DE82EF95
_MASK64 = (1 << 64) - 1
_TWO53 = float(1 << 53)


def _avalanche(z: np.ndarray) -> np.ndarray:
    """64-bit finalizer (splitmix64 style), vectorized over uint64 arrays."""
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed: int, indices, counter: int = 0) -> np.ndarray:
    """Uniform(0,1) draws for the given stream indices, independent of order.

    Each draw is a pure function of (seed, index, counter).  The guard
    against an exact 0 or 1 remixes with a bumped counter; the conversion
    (h >> 11) * 2^-53 can produce 0 but never 1.
    """
    idx = np.asarray(indices, dtype=np.uint64)
    key = np.uint64((seed * _KEY_INT) & _MASK64)
    ctr = np.full(idx.shape, counter, dtype=np.uint64)
    u = np.zeros(idx.shape, dtype=np.float64)
    pending = np.ones(idx.shape, dtype=bool)
    while pending.any():
        h = _avalanche(key + idx[pending] * _PHI + ctr[pending] * _CTR)
        u[pending] = (h >> np.uint64(11)).astype(np.float64) / _TWO53
        ok = (u[pending] > 0.0) & (u[pending] < 1.0)
        still = np.flatnonzero(pending)[~ok]
        pending[:] = False
        pending[still] = True
        ctr[still] += np.uint64(1)
    return u


def derive_seed(seed: int, index: int) -> int:
    """Deterministic 63-bit child seed for ensemble member `index`."""
    z = (seed * _KEY_INT + index * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) >> 1


_G_CATALOG = ("log1p", "asinh", "atan")


@dataclass(frozen=True)
class TailSpec:
    """Distribution of a single potential value via its double-log tail F.

    kind "exact" is the pure doubly-exponential law; kind "perturbed" adds
    g(r) with g' -> 0 from a named catalog:

        log1p:  g(r) = c * log(1 + |r|)
        asinh:  g(r) = c * asinh(r)      (smooth log-type perturbation)
        atan:   g(r) = c * atan(r)       (bounded perturbation)

    |c| < 1/rho keeps F strictly increasing on the whole line.
    """

    rho: float
    kind: str = "exact"
    g_name: str | None = None
    g_coeff: float = 0.0

    def __post_init__(self):
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError("rho must be a positive real")
        if self.kind not in ("exact", "perturbed"):
            raise ValueError(f"unknown tail kind {self.kind!r}")
        if self.kind == "perturbed":
            if self.g_name not in _G_CATALOG:
                raise ValueError(f"g must be one of {_G_CATALOG}, got {self.g_name!r}")
            if not abs(self.g_coeff) < 1.0 / self.rho:
                raise ValueError("need |g_coeff| < 1/rho for a strictly increasing F")

    # F and F' ------------------------------------------------------------

    def F(self, r):
        r = np.asarray(r, dtype=np.float64)
        base = r / self.rho
        if self.kind == "exact":
            return base
        c = self.g_coeff
        if self.g_name == "log1p":
            return base + c * np.log1p(np.abs(r))
        if self.g_name == "asinh":
            return base + c * np.arcsinh(r)
        return base + c * np.arctan(r)

    def dF(self, r):
        r = np.asarray(r, dtype=np.float64)
        base = np.full(r.shape, 1.0 / self.rho)
        if self.kind == "exact":
            return base
        c = self.g_coeff
        if self.g_name == "log1p":
            return base + c * np.sign(r) / (1.0 + np.abs(r))
        if self.g_name == "asinh":
            return base + c / np.sqrt(1.0 + r * r)
        return base + c / (1.0 + r * r)

    def F_inv(self, y):
        """Inverse of F, vectorized (closed form when exact, bisection otherwise)."""
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "exact":
            return self.rho * y
        lo = self.rho * y - 1.0
        hi = self.rho * y + 1.0
        for _ in range(200):
            bad = self.F(lo) >= y
            if not bad.any():
                break
            lo = np.where(bad, lo - 2.0 * (hi - lo), lo)
        for _ in range(200):
            bad = self.F(hi) <= y
            if not bad.any():
                break
            hi = np.where(bad, hi + 2.0 * (hi - lo), hi)
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            below = self.F(mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def value_from_uniform(self, u):
        """Inverse-CDF transform: the value whose upper-tail probability is u."""
        u = np.asarray(u, dtype=np.float64)
        return self.F_inv(np.log(-np.log(u)))

    def to_json(self) -> dict:
        obj = {"rho": self.rho, "kind": self.kind}
        if self.kind == "perturbed":
            obj["g"] = {"name": self.g_name, "coeff": self.g_coeff}
        return obj

    @classmethod
    def from_json(cls, obj) -> "TailSpec":
        if obj.get("kind", "exact") == "perturbed":
            return cls(obj["rho"], "perturbed", obj["g"]["name"], obj["g"]["coeff"])
        return cls(obj["rho"])


def tail_prob(spec: TailSpec, r) -> float | np.ndarray:
    """P(xi > r) = exp(-e^{F(r)}); underflows to 0.0 with a warning for huge r."""
    t = spec.F(r)
    with np.errstate(over="ignore"):
        out = np.exp(-np.exp(t))
    if np.any(np.asarray(t) > math.log(745.0)) and np.any(np.asarray(out) == 0.0):
        warnings.warn("tail probability underflowed to 0", RuntimeWarning, stacklevel=2)
    if np.ndim(r) == 0:
        return float(out)
    return out


def log_tail_prob(spec: TailSpec, r):
    """log P(xi > r) = -e^{F(r)}, exact in log space."""
    out = -np.exp(spec.F(r))
    if np.ndim(r) == 0:
        return float(out)
    return out


def log_density(spec: TailSpec, r):
    """log of the density, stable far into the tail where f itself underflows."""
    t = np.asarray(spec.F(r), dtype=np.float64)
    with np.errstate(over="ignore"):
        out = np.log(spec.dF(r)) + t - np.exp(t)
    if np.ndim(r) == 0:
        return float(out)
    return out


def density(spec: TailSpec, r) -> float | np.ndarray:
    """Lebesgue density f(r) = F'(r) e^{F(r)} exp(-e^{F(r)}) (nonnegative form)."""
    t = np.asarray(spec.F(r), dtype=np.float64)
    with np.errstate(over="ignore"):
        out = np.where(t > 700.0, -np.inf, log_density(spec, r))
    out = np.exp(out)
    if np.ndim(r) == 0:
        return float(out)
    return out


def hat_a(spec: TailSpec, L: int, d: int) -> float:
    """The unique level with tail probability L^{-d}.

    Closed form rho*log(d log L) for the exact kind; bracketed root solve to
    1e-12 otherwise, so tail_prob(hat_a) * L^d = 1 to solver precision.
    """
    if L < 2:
        raise ValueError("need L >= 2")
    if d < 1:
        raise ValueError("need d >= 1")
    target = math.log(d * math.log(L))
    if spec.kind == "exact":
        return spec.rho * target
    lo, hi = spec.rho * target - 1.0, spec.rho * target + 1.0
    while spec.F(lo) >= target:
        lo -= 2.0 * (hi - lo)
    while spec.F(hi) <= target:
        hi += 2.0 * (hi - lo)
    return float(brentq(lambda x: float(spec.F(x)) - target, lo, hi, xtol=1e-12))


@dataclass(frozen=True)
class PotentialField:
    """A realized configuration xi on a domain, values in lexicographic site order."""

    domain: LatticeDomain
    values: np.ndarray
    spec: TailSpec | None = None
    seed: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.domain),):
            raise ValueError("field must assign exactly one value per domain site")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def value(self, site) -> float:
        return float(self.values[self.domain.rank(site)])

    def max_value(self) -> float:
        return float(self.values.max())

    def restrict(self, sub: LatticeDomain) -> "PotentialField":
        idx = [self.domain.rank(s) for s in sub.sites]
        return PotentialField(sub, self.values[idx], self.spec, self.seed)

    def shifted(self, c: float) -> "PotentialField":
        return PotentialField(self.domain, self.values + c, self.spec, self.seed)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "spec": None if self.spec is None else self.spec.to_json(),
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_json(cls, domain: LatticeDomain, obj) -> "PotentialField":
        spec = None if obj.get("spec") is None else TailSpec.from_json(obj["spec"])
        return cls(domain, np.asarray(obj["values"], dtype=np.float64), spec, obj.get("seed"))

    @classmethod
    def from_values(cls, domain: LatticeDomain, values) -> "PotentialField":
        if isinstance(values, dict):
            values = [values[s] for s in domain.sites]
        return cls(domain, np.asarray(values, dtype=np.float64))


def sample(domain: LatticeDomain, spec: TailSpec, seed: int) -> PotentialField:
    """i.i.d. draw of the potential on `domain`, reproducible from (domain, spec, seed).

    Per-site streams are keyed by the lexicographic site rank through a
    64-bit avalanche mix, so the result does not depend on iteration order
    or on how the work is split across workers.
    """
    u = counter_uniforms(seed, np.arange(len(domain), dtype=np.uint64))
    return PotentialField(domain, spec.value_from_uniform(u), spec, seed)
