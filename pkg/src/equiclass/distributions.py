"""Cost and signal distributions.

Costs ``c`` are drawn from a :class:`Distribution` ``F``; signals are drawn
from one distribution per behavior (noncomply ``0``, comply ``1`` and
optionally cheat ``chi``), bundled in a :class:`SignalModel`.

Gaussian evaluation is backed by ``scipy.special`` (``ndtr``/``ndtri``, the
Cephes routines, absolute error well below 1e-15 on the real line). All
distribution parameters are location and *standard deviation*.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar

import numpy as np
from scipy import special

from .errors import InvalidModelError, UnsupportedFamilyError

ArrayLike = float | np.ndarray


class Distribution(ABC):
    """Continuous distribution with full support on the real line."""

    kind: ClassVar[str]

    @abstractmethod
    def cdf(self, x: ArrayLike) -> ArrayLike: ...

    @abstractmethod
    def sf(self, x: ArrayLike) -> ArrayLike: ...

    @abstractmethod
    def pdf(self, x: ArrayLike) -> ArrayLike: ...

    @abstractmethod
    def logpdf(self, x: ArrayLike) -> ArrayLike: ...

    @abstractmethod
    def quantile(self, p: ArrayLike) -> ArrayLike: ...

    @abstractmethod
    def rvs(self, rng: np.random.Generator, size: int) -> np.ndarray: ...

    @property
    @abstractmethod
    def center(self) -> float: ...

    @property
    @abstractmethod
    def spread(self) -> float:
        """Standard deviation (used for grid and quadrature scaling)."""

    def interval(self, width: float) -> tuple[float, float]:
        return self.center - width * self.spread, self.center + width * self.spread

    def mass(self, lo: ArrayLike, hi: ArrayLike) -> ArrayLike:
        """Probability of ``(lo, hi]``, using the survival function in the upper half."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        flo, fhi = np.isfinite(lo), np.isfinite(hi)
        with np.errstate(invalid="ignore"):
            mid = np.where(flo & fhi, 0.5 * (lo + hi), np.where(flo, lo, np.where(fhi, hi, self.center)))
        upper = mid > self.center
        out = np.where(upper, self.sf(lo) - self.sf(hi), self.cdf(hi) - self.cdf(lo))
        return out if out.ndim else float(out)

    @abstractmethod
    def to_dict(self) -> dict[str, Any]: ...


@dataclass(frozen=True)
class Gaussian(Distribution):
    mean: float = 0.0
    std: float = 1.0

    kind: ClassVar[str] = "gaussian"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.std)) or self.std <= 0:
            raise InvalidModelError(f"Gaussian needs finite mean and std > 0, got ({self.mean}, {self.std})")

    def _z(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def cdf(self, x):
        return _scalar(special.ndtr(self._z(x)))

    def sf(self, x):
        return _scalar(special.ndtr(-self._z(x)))

    def pdf(self, x):
        z = self._z(x)
        return _scalar(np.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi)))

    def logpdf(self, x):
        z = self._z(x)
        return _scalar(-0.5 * z * z - math.log(self.std) - 0.5 * math.log(2.0 * math.pi))

    def quantile(self, p):
        return _scalar(self.mean + self.std * special.ndtri(np.asarray(p, dtype=float)))

    def rvs(self, rng, size):
        return rng.normal(self.mean, self.std, size)

    @property
    def center(self):
        return self.mean

    @property
    def spread(self):
        return self.std

    @property
    def variance(self) -> float:
        return self.std**2

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean, "scale": self.std}


@dataclass(frozen=True)
class Logistic(Distribution):
    """Logistic location-scale family; log-concave, so location shifts satisfy MLRP."""

    loc: float = 0.0
    scale: float = 1.0

    kind: ClassVar[str] = "logistic"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.loc) and math.isfinite(self.scale)) or self.scale <= 0:
            raise InvalidModelError(f"Logistic needs finite loc and scale > 0, got ({self.loc}, {self.scale})")

    def _z(self, x):
        return (np.asarray(x, dtype=float) - self.loc) / self.scale

    def cdf(self, x):
        return _scalar(special.expit(self._z(x)))

    def sf(self, x):
        return _scalar(special.expit(-self._z(x)))

    def pdf(self, x):
        return _scalar(np.exp(self.logpdf(x)))

    def logpdf(self, x):
        z = self._z(x)
        return _scalar(-np.abs(z) - 2.0 * np.log1p(np.exp(-np.abs(z))) - math.log(self.scale))

    def quantile(self, p):
        return _scalar(self.loc + self.scale * special.logit(np.asarray(p, dtype=float)))

    def rvs(self, rng, size):
        return rng.logistic(self.loc, self.scale, size)

    @property
    def center(self):
        return self.loc

    @property
    def spread(self):
        return self.scale * math.pi / math.sqrt(3.0)

    def to_dict(self):
        return {"kind": self.kind, "loc": self.loc, "scale": self.scale}


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def distribution_from_dict(spec: dict[str, Any]) -> Distribution:
    """Build a distribution from its serialized form.

    Gaussian ``scale`` is a standard deviation unless ``scale_is`` is
    ``"variance"``.
    """
    kind = str(spec.get("kind", "gaussian")).lower()
    if kind in ("gaussian", "normal"):
        scale = float(spec.get("scale", spec.get("std", 1.0)))
        scale_is = spec.get("scale_is", "std")
        if scale_is == "variance":
            if scale <= 0:
                raise InvalidModelError(f"variance must be > 0, got {scale}")
            scale = math.sqrt(scale)
        elif scale_is != "std":
            raise InvalidModelError(f"scale_is must be 'std' or 'variance', got {scale_is!r}")
        return Gaussian(float(spec.get("mean", 0.0)), scale)
    if kind == "logistic":
        return Logistic(float(spec.get("loc", 0.0)), float(spec.get("scale", 1.0)))
    raise UnsupportedFamilyError(f"unknown distribution kind {kind!r}")


# Module-level conveniences mirroring the operation names.

def cdf(dist: Distribution, x: ArrayLike) -> ArrayLike:
    return dist.cdf(x)


def pdf(dist: Distribution, x: ArrayLike) -> ArrayLike:
    return dist.pdf(x)


def sample(dist: Distribution, n: int, seed: int) -> np.ndarray:
    """``n`` independent draws, reproducible from ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return dist.rvs(np.random.default_rng(seed), n)


@dataclass(frozen=True)
class SignalModel:
    """Behavior-conditional signal distributions ``g_0``, ``g_1`` and optional ``g_chi``."""

    noncomply: Distribution
    comply: Distribution
    cheat: Distribution | None = None

    @property
    def has_cheat(self) -> bool:
        return self.cheat is not None

    def items(self) -> list[tuple[str, Distribution]]:
        out = [("0", self.noncomply), ("1", self.comply)]
        if self.cheat is not None:
            out.append(("chi", self.cheat))
        return out

    def default_interval(self, width: float = 8.0) -> tuple[float, float]:
        """Union of the per-behavior ``center +- width * spread`` intervals."""
        lo = min(d.interval(width)[0] for _, d in self.items())
        hi = max(d.interval(width)[1] for _, d in self.items())
        return lo, hi

    def to_dict(self) -> dict[str, Any]:
        out = {"noncomply": self.noncomply.to_dict(), "comply": self.comply.to_dict()}
        if self.cheat is not None:
            out["cheat"] = self.cheat.to_dict()
        return out


def _mlrp_pairs(model: SignalModel) -> list[tuple[str, Distribution, Distribution]]:
    pairs = [("g_1/g_0", model.comply, model.noncomply)]
    if model.cheat is not None:
        pairs += [("g_1/g_chi", model.comply, model.cheat), ("g_chi/g_0", model.cheat, model.noncomply)]
    return pairs


def _common_variance_gaussians(dists) -> bool:
    if not all(isinstance(d, Gaussian) for d in dists):
        return False
    return all(math.isclose(d.std, dists[0].std, rel_tol=1e-12, abs_tol=0.0) for d in dists)


def mlrp_violations(
    model: SignalModel,
    grid_lo: float | None = None,
    grid_hi: float | None = None,
    n: int = 4001,
) -> list[str]:
    """Names of the likelihood ratios that fail to be strictly increasing.

    Gaussian pairs with a common variance are decided analytically (the log
    ratio is linear with slope proportional to the mean gap); all other pairs
    are checked on an ``n``-point grid.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if grid_lo is None or grid_hi is None:
        lo, hi = model.default_interval(6.0)
        grid_lo = lo if grid_lo is None else grid_lo
        grid_hi = hi if grid_hi is None else grid_hi
    if not grid_lo < grid_hi:
        raise ValueError("grid_lo must be < grid_hi")
    grid = np.linspace(grid_lo, grid_hi, n)
    bad = []
    for name, num, den in _mlrp_pairs(model):
        if _common_variance_gaussians([num, den]):
            if not num.mean > den.mean:
                bad.append(name)
            continue
        lr = np.asarray(num.logpdf(grid)) - np.asarray(den.logpdf(grid))
        if not np.all(np.isfinite(lr)):
            raise InvalidModelError(f"non-finite log density ratio for {name} on [{grid_lo}, {grid_hi}]")
        if not np.all(np.diff(lr) > 0):
            bad.append(name)
    return bad


def check_mlrp(
    model: SignalModel,
    grid_lo: float | None = None,
    grid_hi: float | None = None,
    n: int = 4001,
) -> bool:
    """True iff every required likelihood ratio is strictly increasing."""
    return not mlrp_violations(model, grid_lo, grid_hi, n)


@dataclass(frozen=True)
class ExpFamilyRatios:
    """``g_1/g_chi = exp(a s + b)`` and ``g_0/g_chi = exp(-c s + d)``."""

    a: float
    b: float
    c: float
    d: float

    def comply_over_cheat(self, s: ArrayLike) -> ArrayLike:
        return _scalar(np.exp(self.a * np.asarray(s, dtype=float) + self.b))

    def noncomply_over_cheat(self, s: ArrayLike) -> ArrayLike:
        return _scalar(np.exp(-self.c * np.asarray(s, dtype=float) + self.d))


def exp_family_ratios(model: SignalModel) -> ExpFamilyRatios:
    """Exponential-family coefficients of a three-behavior Gaussian model.

    Requires ``g_0``, ``g_chi``, ``g_1`` Gaussian with a common variance and
    means ordered ``mu_0 < mu_chi < mu_1``.
    """
    dists = [model.noncomply, model.cheat, model.comply]
    if model.cheat is None:
        raise UnsupportedFamilyError("exponential-family ratios need a cheat signal distribution")
    if not _common_variance_gaussians(dists):
        raise UnsupportedFamilyError("exponential-family ratios need Gaussian signals with a common variance")
    m0, mc, m1 = (d.mean for d in dists)
    if not m0 < mc < m1:
        raise UnsupportedFamilyError(f"means must satisfy mu_0 < mu_chi < mu_1, got ({m0}, {mc}, {m1})")
    var = model.comply.variance
    return ExpFamilyRatios(
        a=(m1 - mc) / var,
        b=-(m1 * m1 - mc * mc) / (2.0 * var),
        c=(mc - m0) / var,
        d=(mc * mc - m0 * m0) / (2.0 * var),
    )
