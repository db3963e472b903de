"""Monte Carlo and exact-enumeration estimation of tail events and certificates.

A Monte Carlo run can never prove an inequality; verdicts therefore only
report `violation_evidence` when the exact Clopper-Pearson lower confidence
bound exceeds the closed-form bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats as sps

from .bounds import beta_decay_coefficient, f_rate
from .processes import BatchStats, DifferenceModel, sample_batch

__all__ = [
    "MCEstimate",
    "MeanEstimate",
    "DominationVerdict",
    "Statistic",
    "TailEvent",
    "clopper_pearson",
    "evaluate_event",
    "closed_ge",
    "estimate_tail",
    "estimate_tail_from",
    "exact_tail_rademacher",
    "exact_mean_rademacher",
    "expectation_bound",
    "expectation_bound_from",
    "optimize_over_p",
    "optimize_over_p_from",
    "optimize_expectation_values",
    "exact_optimized_bound_rademacher",
    "golden_section_min",
    "domination_check",
    "supermartingale_check",
    "exact_supermartingale_mean_rademacher",
    "exp_growth_coefficient",
    "ENUMERATION_CAP",
    "P_SEARCH_WINDOW",
]

ENUMERATION_CAP = 20
# inf over p > 1 is searched on ln(p - 1) over this window.
P_SEARCH_WINDOW = (1e-3, 50.0)
_GOLDEN_ITERS = 60


def clopper_pearson(hits: int, n_rep: int, gamma: float) -> tuple[float, float]:
    """Two-sided exact binomial confidence interval at confidence level gamma."""
    if not 0 <= hits <= n_rep:
        raise ValueError(f"hits={hits} outside [0, {n_rep}]")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    alpha = 1.0 - gamma
    lo = 0.0 if hits == 0 else float(sps.beta.ppf(alpha / 2.0, hits, n_rep - hits + 1))
    hi = 1.0 if hits == n_rep else float(sps.beta.ppf(1.0 - alpha / 2.0, hits + 1, n_rep - hits))
    return lo, hi


@dataclass(frozen=True)
class MCEstimate:
    """Binomial Monte Carlo estimate with an exact confidence interval."""

    n_rep: int
    hits: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    gamma: float

    @classmethod
    def from_hits(cls, hits: int, n_rep: int, gamma: float) -> "MCEstimate":
        lo, hi = clopper_pearson(hits, n_rep, gamma)
        return cls(n_rep=n_rep, hits=hits, p_hat=hits / n_rep, ci_lo=lo, ci_hi=hi, gamma=gamma)


@dataclass(frozen=True)
class MeanEstimate:
    """Normal-approximation estimate of an unbounded positive mean.

    The sample maximum is reported alongside because heavy right tails make
    the normal interval optimistic.
    """

    n_rep: int
    mean: float
    se: float
    sample_max: float

    @property
    def ci_lo(self) -> float:
        return self.mean - 3.0 * self.se


@dataclass(frozen=True)
class DominationVerdict:
    """Outcome of comparing an estimate against a closed-form bound."""

    bound_value: float
    estimate: object
    status: str  # pass | violation_evidence | vacuous
    margin: float


def domination_check(estimate, bound: float) -> DominationVerdict:
    """Statistically sound verdict: violation only when ci_lo exceeds the bound."""
    if bound < 0:
        raise ValueError(f"bound must be >= 0, got {bound}")
    if bound >= 1.0:
        status = "vacuous"
    elif estimate.ci_lo > bound:
        status = "violation_evidence"
    else:
        status = "pass"
    return DominationVerdict(
        bound_value=bound, estimate=estimate, status=status, margin=bound - estimate.ci_lo
    )


@dataclass(frozen=True)
class Statistic:
    """A scalar normalizer/window statistic, optionally rescaled affinely.

    Names: b_n, sqrt_b_n (need y); sq_var, sqrt_sq_var, cond_var; h_n (needs a);
    g_n, g_n_root (need beta).  The resolved value is shift + scale * base.
    """

    name: str
    y: float | None = None
    a: float | None = None
    beta: float | None = None
    shift: float = 0.0
    scale: float = 1.0

    def resolve(self, stats) -> np.ndarray:
        base = self._base(stats)
        if self.shift == 0.0 and self.scale == 1.0:
            return base
        return self.shift + self.scale * base

    def _base(self, stats) -> np.ndarray:
        name = self.name
        if name == "b_n":
            return stats.b_n(self._need("y"))
        if name == "sqrt_b_n":
            return np.sqrt(stats.b_n(self._need("y")))
        if name == "sq_var":
            return stats.sq_var()
        if name == "sqrt_sq_var":
            return np.sqrt(stats.sq_var())
        if name == "cond_var":
            return stats.cond_var()
        if name == "h_n":
            return stats.h_n(self._need("a"))
        if name == "g_n":
            return stats.g_n(self._need("beta"))
        if name == "g_n_root":
            beta = self._need("beta")
            return stats.g_n(beta) ** (1.0 / beta)
        raise ValueError(f"unknown statistic {name!r}")

    def _need(self, field: str) -> float:
        value = getattr(self, field)
        if value is None:
            raise ValueError(f"statistic {self.name!r} needs parameter {field!r}")
        return value


@dataclass(frozen=True)
class TailEvent:
    """Event {S_n / N >= x} with an optional window lo <= W <= hi.

    normalizer None means the raw event {S_n >= x}.  A nonpositive normalizer
    realization makes the ratio event false (degenerate-normalizer rule).
    """

    x: float
    normalizer: Statistic | None = None
    window: tuple[Statistic, float, float] | None = None


_EVENT_TOL = 1e-12


def closed_ge(values: np.ndarray, threshold: float) -> np.ndarray:
    # The theorems state closed events; a hair of relative slack keeps
    # exact-boundary atoms (e.g. ratio sqrt(2) vs threshold sqrt(2)) from
    # being dropped by one-ulp rounding.  The slack only enlarges the event.
    return values >= threshold - _EVENT_TOL * max(1.0, abs(threshold))


def evaluate_event(stats, event: TailEvent) -> np.ndarray:
    """Boolean vector of the event on every path of a stats batch."""
    s = stats.s()
    if event.normalizer is None:
        ok = closed_ge(s, event.x)
    else:
        norm = event.normalizer.resolve(stats)
        ratio = np.divide(s, norm, out=np.full(np.shape(s), -np.inf), where=norm > 0)
        ok = (norm > 0) & closed_ge(ratio, event.x)
    if event.window is not None:
        wstat, lo, hi = event.window
        w = wstat.resolve(stats)
        ok = ok & closed_ge(w, lo) & closed_ge(-w, -hi)
    return ok


def estimate_tail_from(stats, event: TailEvent, gamma: float) -> MCEstimate:
    hits = int(np.count_nonzero(evaluate_event(stats, event)))
    return MCEstimate.from_hits(hits, stats.xs.shape[0], gamma)


def estimate_tail(
    model: DifferenceModel,
    n: int,
    event: TailEvent,
    n_rep: int,
    gamma: float,
    master_seed: int,
) -> MCEstimate:
    """Estimate P(event) from n_rep independent paths; deterministic in master_seed."""
    if n_rep < 100:
        raise ValueError(f"n_rep must be >= 100, got {n_rep}")
    stats = BatchStats(sample_batch(model, n, n_rep, master_seed), model)
    return estimate_tail_from(stats, event, gamma)


# ---------------------------------------------------------------------------
# Exact enumeration oracle for fair-sign paths.
#
# Statistics here are recomputed from first principles (inline +-1 moment
# constants), independently of the processes module, so the oracle can catch
# bookkeeping bugs on the Monte Carlo side.
# ---------------------------------------------------------------------------


class _SignEnumStats:
    """Bracket statistics of a chunk of enumerated +-1 paths."""

    def __init__(self, signs: np.ndarray):
        self.xs = signs
        self.n = signs.shape[1]

    def s(self):
        return self.xs.sum(axis=1)

    def sq_var(self):
        return (self.xs * self.xs).sum(axis=1)

    def cond_var(self):
        return np.full(self.xs.shape[0], float(self.n))  # E[xi^2] = 1

    def b_n(self, y):
        above = ((self.xs * self.xs) * (self.xs > y)).sum(axis=1)
        below = 1.0 if y >= 1.0 else 0.5  # E[xi^2 1{xi <= y}]
        return above + self.n * below

    def h_n(self, a):
        big = ((self.xs * self.xs) * (np.abs(self.xs) > a)).sum(axis=1)
        return big + self.n * 1.0

    def g_n(self, beta):
        pos = (np.maximum(self.xs, 0.0) ** beta).sum(axis=1)
        return pos + self.n * 0.5  # E[(xi^-)^beta] = 1/2


def _enumerate_sign_chunks(n: int, chunk: int = 1 << 16):
    total = 1 << n
    cols = np.arange(n, dtype=np.uint32)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.uint32)
        bits = (codes[:, None] >> cols) & 1
        yield bits.astype(float) * 2.0 - 1.0


def exact_tail_rademacher(n: int, event: TailEvent) -> float:
    """Exact P(event) over all 2^n sign paths (exact: a count over a power of two)."""
    if not 1 <= n <= ENUMERATION_CAP:
        raise ValueError(f"n must be in [1, {ENUMERATION_CAP}], got {n}")
    hits = 0
    for signs in _enumerate_sign_chunks(n):
        hits += int(np.count_nonzero(evaluate_event(_SignEnumStats(signs), event)))
    return hits / float(1 << n)


def exact_mean_rademacher(n: int, fn) -> float:
    """Exact E[fn(paths)] where fn maps a (chunk, n) sign matrix to values."""
    if not 1 <= n <= ENUMERATION_CAP:
        raise ValueError(f"n must be in [1, {ENUMERATION_CAP}], got {n}")
    total = 0.0
    for signs in _enumerate_sign_chunks(n):
        total += float(np.sum(np.asarray(fn(signs), dtype=float)))
    return total / float(1 << n)


# ---------------------------------------------------------------------------
# Expectation-type bounds and the inf over p > 1.
# ---------------------------------------------------------------------------


def golden_section_min(f, lo: float, hi: float, iters: int = _GOLDEN_ITERS):
    """Deterministic golden-section minimization on [lo, hi]."""
    if hi <= lo:
        raise ValueError("need lo < hi")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    if f1 <= f2:
        return x1, f1
    return x2, f2


def _rate_and_normalizer(stats, x: float, y: float | None, beta: float | None):
    if (y is None) == (beta is None):
        raise ValueError("provide exactly one of y or beta")
    if beta is None:
        return f_rate(x, y), stats.b_n(y)
    return beta_decay_coefficient(x, beta), stats.g_n(beta)


def expectation_bound_from(
    stats,
    x: float,
    *,
    y: float | None = None,
    beta: float | None = None,
    p: float,
    with_indicator: bool = True,
) -> tuple[float, float]:
    """(E[exp{-(p-1) rate N} (1_event)])^{1/p} estimated on a fixed sample set.

    Returns (value, standard error of the value) via the delta method.
    """
    if p <= 1.0:
        raise ValueError(f"p must be > 1, got {p}")
    rate, norm = _rate_and_normalizer(stats, x, y, beta)
    z = np.exp(-(p - 1.0) * rate * norm)
    if with_indicator:
        z = z * (stats.s() >= x * norm)
    m = float(np.mean(z))
    se_mean = float(np.std(z, ddof=1) / math.sqrt(len(z))) if len(z) > 1 else 0.0
    value = m ** (1.0 / p)
    se = 0.0 if m <= 0.0 else se_mean * value / (p * m)
    return value, se


def expectation_bound(
    model: DifferenceModel,
    n: int,
    x: float,
    *,
    y: float | None = None,
    beta: float | None = None,
    p: float,
    with_indicator: bool = True,
    n_rep: int,
    master_seed: int,
) -> tuple[float, float]:
    stats = BatchStats(sample_batch(model, n, n_rep, master_seed), model)
    return expectation_bound_from(stats, x, y=y, beta=beta, p=p, with_indicator=with_indicator)


@dataclass(frozen=True)
class OptimizedBound:
    p_star: float
    value: float
    se: float


def optimize_expectation_values(rate: float, norm: np.ndarray, indicator) -> OptimizedBound:
    """inf over p > 1 with common random numbers: one fixed (norm, indicator) set."""
    weights = norm if indicator is None else norm[indicator]
    n_all = len(norm)

    def objective(log_pm1: float) -> float:
        p = 1.0 + math.exp(log_pm1)
        z = np.exp(-(p - 1.0) * rate * weights)
        m = float(np.sum(z)) / n_all
        return 0.0 if m <= 0.0 else m ** (1.0 / p)

    lo, hi = math.log(P_SEARCH_WINDOW[0]), math.log(P_SEARCH_WINDOW[1])
    t_star, value = golden_section_min(objective, lo, hi)
    # every p gives a valid bound, so keep the best of the converged point,
    # the window endpoints, and p = 2 (guards against non-unimodal objectives)
    for t in (lo, hi, 0.0):
        candidate = objective(t)
        if candidate < value:
            t_star, value = t, candidate
    p_star = 1.0 + math.exp(t_star)
    z = np.exp(-(p_star - 1.0) * rate * weights)
    full = np.zeros(n_all)
    full[: len(z)] = z  # same multiset as the indicator-masked mean
    m = float(np.sum(z)) / n_all
    se_mean = float(np.std(full, ddof=1) / math.sqrt(n_all)) if n_all > 1 else 0.0
    se = 0.0 if m <= 0.0 else se_mean * value / (p_star * m)
    return OptimizedBound(p_star=p_star, value=value, se=se)


def optimize_over_p_from(
    stats,
    x: float,
    *,
    y: float | None = None,
    beta: float | None = None,
    with_indicator: bool = True,
) -> OptimizedBound:
    rate, norm = _rate_and_normalizer(stats, x, y, beta)
    indicator = (stats.s() >= x * norm) if with_indicator else None
    return optimize_expectation_values(rate, norm, indicator)


def optimize_over_p(
    model: DifferenceModel,
    n: int,
    x: float,
    *,
    y: float | None = None,
    beta: float | None = None,
    with_indicator: bool = True,
    n_rep: int,
    master_seed: int,
) -> OptimizedBound:
    """Minimize the expectation bound over p with one shared sample set."""
    stats = BatchStats(sample_batch(model, n, n_rep, master_seed), model)
    return optimize_over_p_from(stats, x, y=y, beta=beta, with_indicator=with_indicator)


def exact_optimized_bound_rademacher(
    n: int,
    x: float,
    *,
    y: float | None = None,
    beta: float | None = None,
    with_indicator: bool = True,
) -> OptimizedBound:
    """inf over p of the exact enumerated expectation bound for fair-sign paths."""
    if (y is None) == (beta is None):
        raise ValueError("provide exactly one of y or beta")
    rate = f_rate(x, y) if beta is None else beta_decay_coefficient(x, beta)
    norms = []
    inds = []
    for signs in _enumerate_sign_chunks(n):
        st = _SignEnumStats(signs)
        norm = st.b_n(y) if beta is None else st.g_n(beta)
        norms.append(norm)
        inds.append(st.s() >= x * norm)
    norm = np.concatenate(norms)
    indicator = np.concatenate(inds) if with_indicator else None
    out = optimize_expectation_values(rate, norm, indicator)
    return replace(out, se=0.0)


# ---------------------------------------------------------------------------
# Supermartingale certificates.
# ---------------------------------------------------------------------------


def exp_growth_coefficient(lam: float, y: float) -> float:
    """(e^{lam*y} - 1 - lam*y) / y^2, with the y -> 0 limit lam^2/2."""
    if lam <= 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    if y < 0:
        raise ValueError(f"y must be >= 0, got {y}")
    u = lam * y
    if u < 1e-4:
        return 0.5 * lam * lam * (1.0 + u / 3.0 + u * u / 12.0)
    return (math.expm1(u) - u) / (y * y)


def _certificate_values(stats, kind: str, lam: float, y: float | None, beta: float | None):
    if kind == "U":
        if y is None:
            raise ValueError("kind U needs y >= 0")
        coef = exp_growth_coefficient(lam, y)
        return np.exp(lam * stats.s() - coef * stats.b_n(y))
    if kind == "V":
        if beta is None:
            raise ValueError("kind V needs beta in (1, 2)")
        return np.exp(lam * stats.s() - lam ** beta * stats.g_n(beta))
    raise ValueError(f"kind must be 'U' or 'V', got {kind!r}")


def supermartingale_check(
    kind: str,
    model: DifferenceModel,
    n: int,
    lam: float,
    *,
    y: float | None = None,
    beta: float | None = None,
    n_rep: int,
    gamma: float = 0.99,
    master_seed: int = 0,
) -> DominationVerdict:
    """Check E[certificate] <= 1 via a normal-approximation interval.

    Passes iff mean - 3*SE <= 1.  The certificate is positive and can be
    heavy-tailed; the sample maximum is carried in the estimate for honesty.
    """
    stats = BatchStats(sample_batch(model, n, n_rep, master_seed), model)
    values = _certificate_values(stats, kind, lam, y, beta)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n_rep)) if n_rep > 1 else 0.0
    estimate = MeanEstimate(n_rep=n_rep, mean=mean, se=se, sample_max=float(np.max(values)))
    status = "pass" if estimate.ci_lo <= 1.0 else "violation_evidence"
    return DominationVerdict(bound_value=1.0, estimate=estimate, status=status, margin=1.0 - estimate.ci_lo)


def exact_supermartingale_mean_rademacher(n: int, lam: float, y: float) -> float:
    """Exact E[exp{lam S_n - coef(lam,y) B_n(y)}] over all 2^n sign paths."""
    coef = exp_growth_coefficient(lam, y)

    def fn(signs):
        st = _SignEnumStats(signs)
        return np.exp(lam * st.s() - coef * st.b_n(y))

    return exact_mean_rademacher(n, fn)
