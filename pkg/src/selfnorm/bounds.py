"""Closed-form rate functions and exponential tail bounds for self-normalized sums.

All calculators here are pure functions of their parameters.  Bounds larger
than 1 are returned as-is (valid but vacuous); use :func:`clamp_probability`
when a reportable probability is wanted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

__all__ = [
    "RateInputs",
    "BoundSpec",
    "BOUND_KINDS",
    "psi",
    "f_rate",
    "optimal_lambda",
    "optimal_lambda_beta",
    "evaluate_bound",
    "peeling_prefactor",
    "clamp_probability",
]

SQRT_E = math.sqrt(math.e)

# Below this value of the product x*y the direct formulas lose all their
# significant digits to cancellation; three Taylor terms are exact to ~1e-12.
_SERIES_CUTOFF = 1e-4


def psi(x: float) -> float:
    """Variance-correction factor psi(x) = (2/x^2) * integral_0^x ln(1+u) du.

    Evaluated through the closed form 2*((1+x)ln(1+x) - x)/x^2, which equals
    the defining integral exactly.  psi(0) = 1 (continuous limit), psi is
    decreasing, and psi(x) >= 1/(1 + x/3) for all x >= 0.
    """
    if x < 0:
        raise ValueError(f"psi: x must be >= 0, got {x}")
    if x < _SERIES_CUTOFF:
        return 1.0 - x / 3.0 + x * x / 6.0
    return 2.0 * ((1.0 + x) * math.log1p(x) - x) / (x * x)


def f_rate(x: float, y: float) -> float:
    """Optimal exponential rate for a sum normalized by a truncated bracket.

    f(x, y) = [x*y*(ln(x*y + 1) - 1) + ln(x*y + 1)] / y^2 for y > 0, with the
    continuous extension f(x, 0) = x^2/2.  Satisfies f(x, y) = x^2 psi(x*y)/2
    and f(x, y) >= x^2 / (2*(1 + x*y/3)).
    """
    if x < 0 or y < 0:
        raise ValueError(f"f_rate: inputs must be >= 0, got x={x}, y={y}")
    if y == 0.0:
        return 0.5 * x * x
    u = x * y
    if u < _SERIES_CUTOFF:
        # (1+u)ln(1+u) - u = u^2/2 - u^3/6 + u^4/12 - ..., divided by y^2.
        return 0.5 * x * x - x ** 3 * y / 6.0 + x ** 4 * y * y / 12.0
    return (u * (math.log1p(u) - 1.0) + math.log1p(u)) / (y * y)


def optimal_lambda(x: float, y: float) -> float:
    """Argmin of lambda -> (e^{lambda*y} - 1 - lambda*y)/y^2 - lambda*x.

    Equals ln(x*y + 1)/y for y > 0 and x in the limit y -> 0.
    """
    if x <= 0:
        raise ValueError(f"optimal_lambda: x must be > 0, got {x}")
    if y < 0:
        raise ValueError(f"optimal_lambda: y must be >= 0, got {y}")
    if y == 0.0:
        return x
    return math.log1p(x * y) / y


def optimal_lambda_beta(x: float, beta: float) -> float:
    """Argmax of lambda -> lambda*x - lambda^beta, namely (x/beta)^{1/(beta-1)}.

    The maximum value is (beta - 1) * (x/beta)^{beta/(beta-1)}.
    """
    if x <= 0:
        raise ValueError(f"optimal_lambda_beta: x must be > 0, got {x}")
    if not 1.0 < beta < 2.0:
        raise ValueError(f"optimal_lambda_beta: beta must be in (1, 2), got {beta}")
    return (x / beta) ** (1.0 / (beta - 1.0))


def beta_decay_coefficient(x: float, beta: float) -> float:
    """Decay coefficient (beta - 1) * (x/beta)^{beta/(beta-1)} of the heavy-tail rate."""
    if x <= 0:
        raise ValueError(f"beta_decay_coefficient: x must be > 0, got {x}")
    if not 1.0 < beta < 2.0:
        raise ValueError(f"beta_decay_coefficient: beta must be in (1, 2), got {beta}")
    return (beta - 1.0) * (x / beta) ** (beta / (beta - 1.0))


def peeling_prefactor(x: float, M: float) -> float:
    """Slice-count prefactor sqrt(e) * (1 + 2*(1+x)*ln M) of the peeling device."""
    if x < 0:
        raise ValueError(f"peeling_prefactor: x must be >= 0, got {x}")
    if M < 1:
        raise ValueError(f"peeling_prefactor: M must be >= 1, got {M}")
    return SQRT_E * (1.0 + 2.0 * (1.0 + x) * math.log(M))


def clamp_probability(value: float) -> float:
    """Clamp a (possibly vacuous) bound into [0, 1] for reporting."""
    if value < 0:
        raise ValueError(f"clamp_probability: negative value {value}")
    return min(value, 1.0)


# Per-field validation predicates for RateInputs; a field left as None is
# simply absent and only checked when the requested bound kind reads it.
_FIELD_RULES = {
    "x": (lambda v: v >= 0, "must be >= 0"),
    "y": (lambda v: v >= 0, "must be >= 0"),
    "z": (lambda v: v > 0, "must be > 0"),
    "b": (lambda v: v > 0, "must be > 0"),
    "M": (lambda v: v >= 1, "must be >= 1"),
    "beta": (lambda v: 1.0 < v < 2.0, "must be in (1, 2)"),
    "n": (lambda v: isinstance(v, int) and v >= 1, "must be a positive integer"),
    "sigma": (lambda v: v > 0, "must be > 0"),
    "t": (lambda v: v > 0, "must be > 0"),
    "d": (lambda v: isinstance(v, int) and v >= 2, "must be an integer >= 2"),
    "a_bnd": (lambda v: v >= 0, "must be >= 0"),
    "L": (lambda v: v > 0, "must be > 0"),
    "q": (lambda v: v >= 1, "must be >= 1"),
    "c_const": (lambda v: v > 0, "must be > 0"),
}


@dataclass(frozen=True)
class RateInputs:
    """Parameter bundle shared by every bound kind.

    Unused fields may be left as None; each provided field is validated on
    construction and violations raise, never clamp.
    """

    x: float | None = None          # deviation level
    y: float | None = None          # truncation / upper-bound level
    z: float | None = None          # variance-process level
    b: float | None = None          # peeling base scale
    M: float | None = None          # peeling range ratio
    beta: float | None = None       # moment order in (1, 2)
    n: int | None = None            # sample size
    sigma: float | None = None      # noise standard deviation
    t: float | None = None          # tour-length deviation level
    d: int | None = None            # spatial dimension
    a_bnd: float | None = None      # increment bound / affine offset
    L: float | None = None          # variance cap
    q: float | None = None          # Holder exponent
    c_const: float | None = None    # caller-supplied absolute constant

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            ok, rule = _FIELD_RULES[f.name]
            if not ok(value):
                raise ValueError(f"RateInputs.{f.name}={value!r} {rule}")

    def require(self, kind: str, *names: str) -> list:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise ValueError(
                f"evaluate_bound({kind}): missing parameter(s) {', '.join(missing)}"
            )
        return [getattr(self, name) for name in names]


def _bernstein(p: RateInputs) -> float:
    z, var, a = p.require("bernstein", "z", "L", "a_bnd")
    return math.exp(-0.5 * z * z / (var + a * z / 3.0))


def _freedman(p: RateInputs) -> float:
    x, L, a = p.require("freedman", "x", "L", "a_bnd")
    return math.exp(-0.5 * x * x / (L + a * x / 3.0))


def _dvz(p: RateInputs) -> float:
    x, L, a = p.require("dvz", "x", "L", "a_bnd")
    return math.exp(-0.5 * (x * x / L) * psi(a * x / L))


def _dlp_point(p: RateInputs) -> float:
    x, y = p.require("dlp_point", "x", "y")
    return math.exp(-0.5 * x * x * y)


def _dlp_pang(p: RateInputs) -> float:
    x, q = p.require("dlp_pang", "x", "q")
    if x <= 0:
        raise ValueError("evaluate_bound(dlp_pang): x must be > 0")
    e = q / (2.0 * q - 1.0)
    return e ** e * x ** (-e) * math.exp(-0.5 * x * x)


def _bercu_touati(p: RateInputs) -> float:
    x, y, b, a = p.require("bercu_touati", "x", "y", "b", "a_bnd")
    return math.exp(-x * x * (a * b + 0.5 * b * b * y))


def _thm21_point(p: RateInputs) -> float:
    x, y, z = p.require("thm21_point", "x", "y", "z")
    return math.exp(-0.5 * x * x * z / (1.0 + x * y / 3.0))


def _thm22_peeling(p: RateInputs) -> float:
    x, y, M = p.require("thm22_peeling", "x", "y", "M")
    if y > 0:
        (b,) = p.require("thm22_peeling", "b")
        denom = 1.0 + x * y / (3.0 * b)
    else:
        denom = 1.0
    return peeling_prefactor(x, M) * math.exp(-0.5 * x * x / denom)


def _sq_peeling(kind: str):
    def calc(p: RateInputs) -> float:
        x, M = p.require(kind, "x", "M")
        return peeling_prefactor(x, M) * math.exp(-0.5 * x * x)

    return calc


def _delyon(p: RateInputs) -> float:
    x, y = p.require("delyon", "x", "y")
    if y <= 0:
        raise ValueError("evaluate_bound(delyon): y must be > 0")
    return math.exp(-0.5 * x * x / y)


def _thm23_exponent(p: RateInputs) -> float:
    x, beta = p.require("thm23_exponent", "x", "beta")
    return beta_decay_coefficient(x, beta)


def _thm24_peeling(p: RateInputs) -> float:
    x, beta, M = p.require("thm24_peeling", "x", "beta", "M")
    rate = (x / beta) ** (beta / (beta - 1.0)) * (1.0 - 1.0 / beta)
    return (1.0 + 2.0 * (1.0 + x) * math.log(M)) * math.exp(-rate)


def _thm24_peeling_conservative(p: RateInputs) -> float:
    x, beta, M = p.require("thm24_peeling_conservative", "x", "beta", "M")
    rate = (x / beta) ** (beta / (beta - 1.0)) * (1.0 - 1.0 / beta)
    a = 1.0 + (beta - 1.0) / (1.0 + x)
    slices = 1.0 + math.ceil(math.log(M) / math.log(a))
    return slices * math.exp(-rate)


def _thm31_tstat(p: RateInputs) -> float:
    x, n, M = p.require("thm31_tstat", "x", "n", "M")
    shrink = math.sqrt(n / (n + x * x - 1.0))
    return SQRT_E * (1.0 + 2.0 * (1.0 + x * shrink) * math.log(M)) * math.exp(
        -0.5 * n * x * x / (n + x * x - 1.0)
    )


def _thm33_regression(p: RateInputs) -> float:
    x, sigma, y, b, M = p.require("thm33_regression", "x", "sigma", "y", "b", "M")
    prefactor = 2.0 * SQRT_E * (1.0 + 2.0 * (1.0 + x / sigma) * math.log(M))
    return prefactor * math.exp(-0.5 * x * x / (sigma * sigma + x * y / (3.0 * b)))


def _thm34_tsp(p: RateInputs) -> float:
    t, n, d = p.require("thm34_tsp", "t", "n", "d")
    return SQRT_E * (1.0 + (2.0 / d) * (1.0 + t) * math.log(n)) * math.exp(-0.5 * t * t)


def _azuma_tsp(p: RateInputs) -> float:
    t, n, d, c = p.require("azuma_tsp", "t", "n", "d", "c_const")
    if d == 2:
        scale = c * math.log(n)
    else:
        scale = c * n ** ((d - 2.0) / d)
    return math.exp(-t * t / scale)


_CALCULATORS = {
    "bernstein": _bernstein,
    "freedman": _freedman,
    "dvz": _dvz,
    "dlp_point": _dlp_point,
    "dlp_pang": _dlp_pang,
    "bercu_touati": _bercu_touati,
    "thm21_point": _thm21_point,
    "thm22_peeling": _thm22_peeling,
    "cor22_peeling": _sq_peeling("cor22_peeling"),
    "thm25_peeling": _sq_peeling("thm25_peeling"),
    "delyon": _delyon,
    "thm23_exponent": _thm23_exponent,
    "thm24_peeling": _thm24_peeling,
    "thm24_peeling_conservative": _thm24_peeling_conservative,
    "thm31_tstat": _thm31_tstat,
    "thm33_regression": _thm33_regression,
    "thm34_tsp": _thm34_tsp,
    "azuma_tsp": _azuma_tsp,
}

BOUND_KINDS = tuple(sorted(_CALCULATORS))


@dataclass(frozen=True)
class BoundSpec:
    """One bound kind plus the parameters it reads."""

    kind: str
    params: RateInputs

    def __post_init__(self):
        if self.kind not in _CALCULATORS:
            raise ValueError(
                f"unknown bound kind {self.kind!r}; expected one of {', '.join(BOUND_KINDS)}"
            )


def evaluate_bound(spec: BoundSpec) -> float:
    """Evaluate the closed-form right-hand side identified by ``spec``.

    Values above 1 are returned unclamped; ``thm23_exponent`` returns a decay
    coefficient rather than a probability.
    """
    return _CALCULATORS[spec.kind](spec.params)
