"""Martingale-difference models and bracket statistics of sampled paths.

Every model has zero mean by construction and exposes closed-form conditional
moments, so predictable quantities like the conditional variance are the true
expectations rather than plug-in estimates.  Draws are i.i.d. within a path
under the natural filtration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnsupportedStatisticError",
    "DifferenceModel",
    "Rademacher",
    "ScaledTwoPoint",
    "BoundedAbove",
    "CenteredPareto",
    "Gaussian",
    "SymmetricMixture",
    "build_model",
    "substream",
    "sample_path",
    "sample_batch",
    "Path",
    "PathStats",
    "BatchStats",
    "path_stats",
    "truncated_mean",
    "heavy_on_left_verdict",
    "HeavyOnLeftVerdict",
]


class UnsupportedStatisticError(ValueError):
    """A statistic was requested from a model without the needed finite moment."""


def substream(master_seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (master_seed, stream).

    Philox keying makes each stream a pure function of the two integers, so
    replicates can be generated in any order, on any worker, with identical
    results.
    """
    key = np.array([master_seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class DifferenceModel:
    """Base class: a zero-mean increment distribution with closed-form moments."""

    family: str = ""
    square_integrable: bool = True
    conditionally_symmetric: bool = False
    heavy_on_left: bool = False
    upper_bound: float = math.inf  # essential supremum of one increment
    abs_bound: float = math.inf    # essential supremum of |increment|

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def var(self) -> float:
        """E[xi^2]."""
        raise UnsupportedStatisticError(f"{self.family}: variance is not finite")

    def sq_below(self, y: float) -> float:
        """E[xi^2 1{xi <= y}] for y >= 0."""
        raise UnsupportedStatisticError(f"{self.family}: variance is not finite")

    def neg_sq(self) -> float:
        """E[(xi^-)^2]."""
        return self.sq_below(0.0)

    def neg_beta_moment(self, beta: float) -> float:
        """E[(xi^-)^beta] for beta > 0, where the moment is finite."""
        raise NotImplementedError

    def beta_integrable(self, beta: float) -> bool:
        return True

    def truncated_mean(self, a: float) -> float:
        """E[min(|xi|, a) * sign(xi)] for a > 0."""
        raise NotImplementedError

    def bounded_above_by(self, y: float) -> bool:
        return self.upper_bound <= y

    def _check_beta(self, beta: float) -> None:
        # moment accessors accept any positive order; the (1, 2) restriction
        # of the deviation bounds is enforced where bounds are built
        if beta <= 0.0:
            raise ValueError(f"beta must be > 0, got {beta}")
        if not self.beta_integrable(beta):
            raise UnsupportedStatisticError(
                f"{self.family}: E|xi|^{beta} is not finite"
            )


@dataclass(frozen=True)
class Rademacher(DifferenceModel):
    """Fair +-1 increments."""

    family = "rademacher"
    square_integrable = True
    conditionally_symmetric = True
    heavy_on_left = True
    upper_bound = 1.0
    abs_bound = 1.0

    def sample(self, rng, size):
        return np.where(rng.random(size) < 0.5, -1.0, 1.0)

    def var(self):
        return 1.0

    def sq_below(self, y):
        if y < 0:
            raise ValueError(f"y must be >= 0, got {y}")
        return 1.0 if y >= 1.0 else 0.5

    def neg_beta_moment(self, beta):
        self._check_beta(beta)
        return 0.5

    def truncated_mean(self, a):
        if a <= 0:
            raise ValueError(f"a must be > 0, got {a}")
        return 0.0


@dataclass(frozen=True)
class ScaledTwoPoint(DifferenceModel):
    """Two-point increment: `up` with probability `p_up`, else `down` (< 0).

    Zero mean is required of the inputs (p_up*up + (1-p_up)*down = 0); the
    model is heavy on left exactly when up >= |down| (equivalently p_up <= 1/2).
    """

    p_up: float
    up: float
    down: float

    family = "scaled_two_point"
    square_integrable = True

    def __post_init__(self):
        if not 0.0 < self.p_up < 1.0:
            raise ValueError(f"p_up must be in (0, 1), got {self.p_up}")
        if self.up <= 0 or self.down >= 0:
            raise ValueError("require up > 0 and down < 0")
        mean = self.p_up * self.up + (1.0 - self.p_up) * self.down
        if abs(mean) > 1e-12 * max(self.up, -self.down):
            raise ValueError(f"not zero-mean: p_up*up + (1-p_up)*down = {mean}")

    @property
    def upper_bound(self):
        return self.up

    @property
    def abs_bound(self):
        return max(self.up, -self.down)

    @property
    def heavy_on_left(self):
        return self.up >= -self.down

    @property
    def conditionally_symmetric(self):
        return self.p_up == 0.5 and self.up == -self.down

    def sample(self, rng, size):
        return np.where(rng.random(size) < self.p_up, self.up, self.down)

    def var(self):
        return self.p_up * self.up ** 2 + (1.0 - self.p_up) * self.down ** 2

    def sq_below(self, y):
        if y < 0:
            raise ValueError(f"y must be >= 0, got {y}")
        out = (1.0 - self.p_up) * self.down ** 2
        if self.up <= y:
            out += self.p_up * self.up ** 2
        return out

    def neg_beta_moment(self, beta):
        self._check_beta(beta)
        return (1.0 - self.p_up) * (-self.down) ** beta

    def truncated_mean(self, a):
        if a <= 0:
            raise ValueError(f"a must be > 0, got {a}")
        return self.p_up * min(self.up, a) - (1.0 - self.p_up) * min(-self.down, a)


@dataclass(frozen=True)
class BoundedAbove(DifferenceModel):
    """Increments y_cap*(1 - E) with E ~ Exp(1): capped at y_cap, zero mean.

    Continuous support on (-inf, y_cap] with an exponential left tail, so the
    realized part of the truncated bracket is genuinely random below the cap.
    """

    y_cap: float
    base_family: str = "exponential"

    family = "bounded_above"
    square_integrable = True

    def __post_init__(self):
        if self.y_cap <= 0:
            raise ValueError(f"y_cap must be > 0, got {self.y_cap}")
        if self.base_family != "exponential":
            raise ValueError(f"unknown base_family {self.base_family!r}")

    @property
    def upper_bound(self):
        return self.y_cap

    def sample(self, rng, size):
        return self.y_cap * (1.0 - rng.standard_exponential(size))

    def var(self):
        return self.y_cap ** 2

    def sq_below(self, y):
        if y < 0:
            raise ValueError(f"y must be >= 0, got {y}")
        c = self.y_cap
        if y >= c:
            return c * c
        r = y / c
        return c * c * math.exp(-(1.0 - r)) * (r * r - 2.0 * r + 2.0)

    def neg_beta_moment(self, beta):
        self._check_beta(beta)
        return self.y_cap ** beta * math.gamma(beta + 1.0) / math.e

    def truncated_mean(self, a):
        if a <= 0:
            raise ValueError(f"a must be > 0, got {a}")
        c = self.y_cap
        if a <= c:
            return a - 2.0 * c * math.sinh(a / c) / math.e
        return c * math.exp(-(1.0 + a / c))


@dataclass(frozen=True)
class CenteredPareto(DifferenceModel):
    """Symmetric two-sided Pareto: P(|xi| > t) = (1 + t/scale)^(-beta_tail).

    With tail index beta_tail in (1, 2) the mean exists (and is 0 by symmetry)
    while the variance is infinite, so only the beta-moment bracket G_n(beta)
    is available, for beta < beta_tail.
    """

    beta_tail: float
    scale: float = 1.0

    family = "centered_pareto"
    square_integrable = False
    conditionally_symmetric = True
    heavy_on_left = True

    def __post_init__(self):
        if not 1.0 < self.beta_tail < 2.0:
            raise ValueError(f"beta_tail must be in (1, 2), got {self.beta_tail}")
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")

    def sample(self, rng, size):
        u = rng.random(size)
        v = np.where(u < 0.5, 2.0 * u, 2.0 * (1.0 - u))
        # v = 0 cannot occur for u in [0, 1) except u exactly 1/2-adjacent zeros
        v = np.maximum(v, np.finfo(float).tiny)
        mag = self.scale * (v ** (-1.0 / self.beta_tail) - 1.0)
        return np.where(u < 0.5, -mag, mag)

    def beta_integrable(self, beta):
        return beta < self.beta_tail

    def neg_beta_moment(self, beta):
        self._check_beta(beta)
        bt = self.beta_tail
        return (
            0.5
            * self.scale ** beta
            * math.gamma(beta + 1.0)
            * math.gamma(bt - beta)
            / math.gamma(bt)
        )

    def truncated_mean(self, a):
        if a <= 0:
            raise ValueError(f"a must be > 0, got {a}")
        return 0.0

    def tail_prob(self, t: float) -> float:
        """P(xi <= -t) = P(xi >= t) for t >= 0."""
        if t < 0:
            raise ValueError(f"t must be >= 0, got {t}")
        return 0.5 * (1.0 + t / self.scale) ** (-self.beta_tail)


@dataclass(frozen=True)
class Gaussian(DifferenceModel):
    """Centered normal increments with standard deviation sd."""

    sd: float = 1.0

    family = "gaussian"
    square_integrable = True
    conditionally_symmetric = True
    heavy_on_left = True

    def __post_init__(self):
        if self.sd <= 0:
            raise ValueError(f"sd must be > 0, got {self.sd}")

    def sample(self, rng, size):
        return self.sd * rng.standard_normal(size)

    def var(self):
        return self.sd ** 2

    def sq_below(self, y):
        if y < 0:
            raise ValueError(f"y must be >= 0, got {y}")
        u = y / self.sd
        cdf = 0.5 * (1.0 + math.erf(u / math.sqrt(2.0)))
        pdf = math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
        return self.sd ** 2 * (cdf - u * pdf)

    def neg_beta_moment(self, beta):
        self._check_beta(beta)
        # E|Z|^beta = 2^{beta/2} Gamma((beta+1)/2) / sqrt(pi); halve by symmetry.
        return (
            self.sd ** beta
            * 2.0 ** (0.5 * beta)
            * math.gamma(0.5 * (beta + 1.0))
            / (2.0 * math.sqrt(math.pi))
        )

    def truncated_mean(self, a):
        if a <= 0:
            raise ValueError(f"a must be > 0, got {a}")
        return 0.0


@dataclass(frozen=True)
class SymmetricMixture(DifferenceModel):
    """Scale mixture of symmetric two-point increments: xi = +-scales[k] w.p. weights[k]."""

    weights: tuple
    scales: tuple

    family = "conditionally_symmetric_mixture"
    square_integrable = True
    conditionally_symmetric = True
    heavy_on_left = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        s = np.asarray(self.scales, dtype=float)
        if w.ndim != 1 or w.size == 0 or w.size != s.size:
            raise ValueError("weights and scales must be equal-length nonempty sequences")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(s <= 0):
            raise ValueError("scales must be positive")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "scales", tuple(float(x) for x in s))
        object.__setattr__(self, "_cumw", np.cumsum(w))

    @property
    def upper_bound(self):
        return max(self.scales)

    @property
    def abs_bound(self):
        return max(self.scales)

    def sample(self, rng, size):
        comp = np.searchsorted(self._cumw, rng.random(size), side="right")
        comp = np.minimum(comp, len(self.scales) - 1)
        mag = np.asarray(self.scales)[comp]
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * mag

    def var(self):
        return sum(w * s * s for w, s in zip(self.weights, self.scales))

    def sq_below(self, y):
        if y < 0:
            raise ValueError(f"y must be >= 0, got {y}")
        return sum(
            w * s * s * (0.5 + (0.5 if s <= y else 0.0))
            for w, s in zip(self.weights, self.scales)
        )

    def neg_beta_moment(self, beta):
        self._check_beta(beta)
        return 0.5 * sum(w * s ** beta for w, s in zip(self.weights, self.scales))

    def truncated_mean(self, a):
        if a <= 0:
            raise ValueError(f"a must be > 0, got {a}")
        return 0.0


_FAMILIES = {
    "rademacher": Rademacher,
    "scaled_two_point": ScaledTwoPoint,
    "bounded_above": BoundedAbove,
    "centered_pareto": CenteredPareto,
    "gaussian": Gaussian,
    "conditionally_symmetric_mixture": SymmetricMixture,
}


def build_model(desc: dict) -> DifferenceModel:
    """Construct a model from a {"family": ..., **params} description."""
    if not isinstance(desc, dict) or "family" not in desc:
        raise ValueError("model description must be a dict with a 'family' key")
    params = dict(desc)
    family = params.pop("family")
    if family not in _FAMILIES:
        raise ValueError(
            f"unknown model family {family!r}; expected one of {sorted(_FAMILIES)}"
        )
    cls = _FAMILIES[family]
    if family == "conditionally_symmetric_mixture":
        params = {
            "weights": tuple(params["weights"]),
            "scales": tuple(params["scales"]),
        }
    try:
        return cls(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for family {family!r}: {exc}") from exc


@dataclass(frozen=True, eq=False)
class Path:
    """One realized difference sequence."""

    xs: np.ndarray
    model: DifferenceModel
    master_seed: int
    replicate: int

    def __post_init__(self):
        if len(self.xs) < 1:
            raise ValueError("a path needs at least one increment")
        if not np.all(np.isfinite(self.xs)):
            raise ValueError("path contains non-finite increments")


def sample_path(model: DifferenceModel, n: int, master_seed: int, replicate: int = 0) -> Path:
    """Draw a path of n increments; a pure function of (model, n, seed, replicate)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = substream(master_seed, replicate)
    return Path(xs=model.sample(rng, n), model=model, master_seed=master_seed, replicate=replicate)


def sample_batch(model: DifferenceModel, n: int, n_rep: int, master_seed: int) -> np.ndarray:
    """(n_rep, n) matrix whose row r equals sample_path(model, n, master_seed, r).xs."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n_rep < 1:
        raise ValueError(f"n_rep must be >= 1, got {n_rep}")
    out = np.empty((n_rep, n), dtype=float)
    for r in range(n_rep):
        out[r] = model.sample(substream(master_seed, r), n)
    return out


class BatchStats:
    """Vectorized bracket processes of a batch of paths (one row per path).

    Realized sums use the sampled increments; predictable terms use the
    model's closed-form conditional moments.
    """

    def __init__(self, xs: np.ndarray, model: DifferenceModel):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        self.xs = xs
        self.model = model
        self.n = xs.shape[1]
        self._sq = xs * xs

    def s(self) -> np.ndarray:
        return self.xs.sum(axis=1)

    def sq_var(self) -> np.ndarray:
        return self._sq.sum(axis=1)

    def cond_var(self) -> np.ndarray:
        return np.full(self.xs.shape[0], self.n * self.model.var())

    def sq_var_above(self, y: float) -> np.ndarray:
        if y < 0:
            raise ValueError(f"y must be >= 0, got {y}")
        return (self._sq * (self.xs > y)).sum(axis=1)

    def cond_var_below(self, y: float) -> np.ndarray:
        return np.full(self.xs.shape[0], self.n * self.model.sq_below(y))

    def b_n(self, y: float) -> np.ndarray:
        return self.sq_var_above(y) + self.cond_var_below(y)

    def h_n(self, a: float) -> np.ndarray:
        if a < 0:
            raise ValueError(f"a must be >= 0, got {a}")
        return (self._sq * (np.abs(self.xs) > a)).sum(axis=1) + self.cond_var()

    def pos_sq(self) -> np.ndarray:
        return (self._sq * (self.xs > 0)).sum(axis=1)

    def neg_cond(self) -> np.ndarray:
        return np.full(self.xs.shape[0], self.n * self.model.neg_sq())

    def pos_beta(self, beta: float) -> np.ndarray:
        self.model._check_beta(beta)
        return (np.maximum(self.xs, 0.0) ** beta).sum(axis=1)

    def g_n(self, beta: float) -> np.ndarray:
        return self.pos_beta(beta) + self.n * self.model.neg_beta_moment(beta)


class PathStats:
    """Scalar bracket processes of a single path."""

    def __init__(self, path: Path):
        self.path = path
        self._batch = BatchStats(path.xs[None, :], path.model)

    def _scalar(self, arr: np.ndarray) -> float:
        return float(arr[0])

    @property
    def s_n(self) -> float:
        return self._scalar(self._batch.s())

    @property
    def sq_var(self) -> float:
        return self._scalar(self._batch.sq_var())

    @property
    def cond_var(self) -> float:
        return self._scalar(self._batch.cond_var())

    def sq_var_above(self, y: float) -> float:
        return self._scalar(self._batch.sq_var_above(y))

    def cond_var_below(self, y: float) -> float:
        return self._scalar(self._batch.cond_var_below(y))

    def b_n(self, y: float) -> float:
        return self._scalar(self._batch.b_n(y))

    def h_n(self, a: float) -> float:
        return self._scalar(self._batch.h_n(a))

    @property
    def pos_sq(self) -> float:
        return self._scalar(self._batch.pos_sq())

    @property
    def neg_cond(self) -> float:
        return self._scalar(self._batch.neg_cond())

    def g_n(self, beta: float) -> float:
        return self._scalar(self._batch.g_n(beta))


def path_stats(path: Path) -> PathStats:
    """All bracket processes of one path, queryable at any y, a, beta."""
    return PathStats(path)


def truncated_mean(model: DifferenceModel, a: float) -> float:
    """E[min(|xi|, a) sign(xi)] from the model's closed form."""
    return model.truncated_mean(a)


@dataclass(frozen=True)
class HeavyOnLeftVerdict:
    passed: bool
    worst_a: float
    worst_mean: float


def heavy_on_left_verdict(model: DifferenceModel, a_grid) -> HeavyOnLeftVerdict:
    """Check E[min(|xi|, a) sign(xi)] <= 0 (up to 1e-12) over a grid of a > 0."""
    a_grid = list(a_grid)
    if not a_grid:
        raise ValueError("a_grid must be nonempty")
    means = [(model.truncated_mean(a), a) for a in a_grid]
    worst_mean, worst_a = max(means)
    return HeavyOnLeftVerdict(passed=worst_mean <= 1e-12, worst_a=worst_a, worst_mean=worst_mean)
