"""Stochastic linear regression X_{k} = theta*phi_{k-1} + eps_k and its
least-squares deviation bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..bounds import BoundSpec, RateInputs, evaluate_bound
from ..montecarlo import (
    DominationVerdict,
    MCEstimate,
    closed_ge,
    domination_check,
    optimize_expectation_values,
)
from ..processes import DifferenceModel, substream

__all__ = [
    "RegressionRun",
    "RegressionRecord",
    "simulate_regression",
    "ls_estimate",
    "regression_batch",
    "verify_regression",
    "exact_regression_records",
]

SIGMA_FLOOR = 1e-3  # the deviation bounds divide by sigma^2; tiny noise is rejected


class DegenerateDesignError(ValueError):
    """All regressors are zero, so the least-squares estimator is undefined."""


@dataclass(frozen=True, eq=False)
class RegressionRun:
    """One realized regression path: x_obs[k] = theta*phi[k] + eps[k]."""

    theta: float
    phi: np.ndarray
    eps: np.ndarray
    x_obs: np.ndarray

    def __post_init__(self):
        if not (len(self.phi) == len(self.eps) == len(self.x_obs)):
            raise ValueError("phi, eps, x_obs must have equal length")
        if np.any(np.abs(self.phi) > 1.0 + 1e-12):
            raise ValueError("regressors must satisfy |phi| <= 1")


def _sample_phi(kind: str, rng, shape) -> np.ndarray:
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, size=shape)
    if kind == "ones":
        return np.ones(shape)
    raise ValueError(f"unknown regressor kind {kind!r}; expected 'uniform' or 'ones'")


def simulate_regression(
    theta: float,
    phi_kind: str,
    eps_model: DifferenceModel,
    n: int,
    master_seed: int,
    replicate: int = 0,
) -> RegressionRun:
    """Draw one regression path; phi then eps come from one replicate substream."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = substream(master_seed, replicate)
    phi = _sample_phi(phi_kind, rng, n)
    eps = eps_model.sample(rng, n)
    return RegressionRun(theta=theta, phi=phi, eps=eps, x_obs=theta * phi + eps)


def ls_estimate(run: RegressionRun) -> float:
    """Least-squares estimate sum(phi_{k-1} X_k) / sum(phi_{k-1}^2)."""
    denom = float(np.sum(run.phi * run.phi))
    if denom <= 0.0:
        raise DegenerateDesignError("sum of squared regressors is zero")
    return float(np.sum(run.phi * run.x_obs)) / denom


@dataclass(frozen=True, eq=False)
class RegressionBatch:
    """Vectorized replicates: estimation errors and design masses."""

    err: np.ndarray      # theta_hat - theta per replicate
    phi_sq: np.ndarray   # sum phi^2 per replicate
    sigma: float
    y_xi: float          # almost-sure upper bound on xi = phi*eps


def regression_batch(
    theta: float,
    phi_kind: str,
    eps_model: DifferenceModel,
    n: int,
    n_rep: int,
    master_seed: int,
) -> RegressionBatch:
    sigma = math.sqrt(eps_model.var())
    if sigma < SIGMA_FLOOR:
        raise ValueError(f"noise sd {sigma} below the floor {SIGMA_FLOOR}")
    # xi = phi*eps must be bounded above: sup eps if phi >= 0, else sup |eps|.
    y_xi = eps_model.upper_bound if phi_kind == "ones" else eps_model.abs_bound
    if not math.isfinite(y_xi):
        raise ValueError(
            f"eps model {eps_model.family!r} is not bounded for phi kind {phi_kind!r}"
        )
    err = np.empty(n_rep)
    phi_sq = np.empty(n_rep)
    for r in range(n_rep):
        rng = substream(master_seed, r)
        phi = _sample_phi(phi_kind, rng, n)
        eps = eps_model.sample(rng, n)
        ssq = float(np.sum(phi * phi))
        phi_sq[r] = ssq
        err[r] = float(np.sum(phi * eps)) / ssq if ssq > 0 else np.nan
    if np.any(~np.isfinite(err)):
        raise DegenerateDesignError("a replicate produced an all-zero design")
    return RegressionBatch(err=err, phi_sq=phi_sq, sigma=sigma, y_xi=y_xi)


@dataclass(frozen=True)
class RegressionRecord:
    thm: str
    x: float
    b: float | None
    M: float | None
    bound: float
    estimate: MCEstimate | None
    exact: float | None
    verdict: DominationVerdict


def _resolve_window(batch: RegressionBatch, b, M) -> tuple[float, float]:
    root = np.sqrt(batch.phi_sq)
    if b is None:
        b = float(np.percentile(root, 10.0))
    if M is None:
        hi = float(np.percentile(root, 90.0))
        M = max(hi / b, 1.0)
    return float(b), float(M)


def verify_regression(
    thm: str,
    *,
    theta: float,
    phi_kind: str,
    eps_model: DifferenceModel,
    n: int,
    x_grid,
    n_rep: int,
    gamma: float,
    master_seed: int,
    b: float | None = None,
    M: float | None = None,
) -> list[RegressionRecord]:
    """Deviation-bound verdicts for the least-squares estimator.

    thm32_regression: P(|theta_hat - theta| >= x) against twice the inf-over-p
    expectation bound (Monte Carlo over regressor paths, common random numbers).
    thm33_regression: the windowed self-normalized event against the closed form.
    """
    if thm not in ("thm32_regression", "thm33_regression"):
        raise ValueError(f"unknown regression theorem {thm!r}")
    batch = regression_batch(theta, phi_kind, eps_model, n, n_rep, master_seed)
    sigma, y_xi = batch.sigma, batch.y_xi
    records = []
    if thm == "thm32_regression":
        for x in x_grid:
            hits = int(np.count_nonzero(closed_ge(np.abs(batch.err), x)))
            estimate = MCEstimate.from_hits(hits, n_rep, gamma)
            rate = x * x / (2.0 * (sigma * sigma + x * y_xi / 3.0))
            opt = optimize_expectation_values(rate, batch.phi_sq, None)
            bound = 2.0 * opt.value
            records.append(
                RegressionRecord(
                    thm=thm, x=float(x), b=None, M=None, bound=bound,
                    estimate=estimate, exact=None,
                    verdict=domination_check(estimate, bound),
                )
            )
    else:
        b, M = _resolve_window(batch, b, M)
        root = np.sqrt(batch.phi_sq)
        in_window = closed_ge(root, b) & closed_ge(-root, -b * M)
        for x in x_grid:
            hits = int(np.count_nonzero(closed_ge(np.abs(batch.err) * root, x) & in_window))
            estimate = MCEstimate.from_hits(hits, n_rep, gamma)
            bound = evaluate_bound(
                BoundSpec(
                    "thm33_regression",
                    RateInputs(x=float(x), sigma=sigma, y=y_xi, b=b, M=M),
                )
            )
            records.append(
                RegressionRecord(
                    thm=thm, x=float(x), b=b, M=M, bound=bound,
                    estimate=estimate, exact=None,
                    verdict=domination_check(estimate, bound),
                )
            )
    return records


def exact_regression_records(
    thm: str,
    *,
    n: int,
    x_grid,
    scale: float,
    b: float | None = None,
    M: float | None = None,
) -> list[RegressionRecord]:
    """Exact-oracle variant: phi = 1 and eps = +-scale fair signs, enumerated.

    With a constant design, theta_hat - theta = scale * S_n / n, so both the
    tail and the expectation bound are exact binomial sums.
    """
    if thm not in ("thm32_regression", "thm33_regression"):
        raise ValueError(f"unknown regression theorem {thm!r}")
    if not 2 <= n <= 20:
        raise ValueError(f"n must be in [2, 20] for enumeration, got {n}")
    sigma = scale
    y_xi = scale
    sums = np.array([2 * k - n for k in range(n + 1)], dtype=float)
    weights = np.array([math.comb(n, k) for k in range(n + 1)], dtype=float) / 2.0 ** n
    err = scale * sums / n
    records = []
    for x in x_grid:
        if thm == "thm32_regression":
            exact_tail = float(weights[closed_ge(np.abs(err), x)].sum())
            rate = x * x / (2.0 * (sigma * sigma + x * y_xi / 3.0))
            # sum phi^2 = n deterministically, so the expectation is a point mass
            opt = optimize_expectation_values(rate, np.full(1, float(n)), None)
            bound = 2.0 * opt.value
            rec_b, rec_m = None, None
        else:
            rec_b = b if b is not None else math.sqrt(n)
            rec_m = M if M is not None else 1.0
            root = math.sqrt(n)
            in_window = rec_b <= root <= rec_b * rec_m
            exact_tail = (
                float(weights[closed_ge(np.abs(err) * root, x)].sum()) if in_window else 0.0
            )
            bound = evaluate_bound(
                BoundSpec(
                    "thm33_regression",
                    RateInputs(x=float(x), sigma=sigma, y=y_xi, b=rec_b, M=rec_m),
                )
            )
        status = "vacuous" if bound >= 1.0 else (
            "violation_evidence" if exact_tail > bound + 1e-12 else "pass"
        )
        verdict = DominationVerdict(
            bound_value=bound, estimate=None, status=status, margin=bound - exact_tail
        )
        records.append(
            RegressionRecord(
                thm=thm, x=float(x), b=rec_b, M=rec_m, bound=bound,
                estimate=None, exact=exact_tail, verdict=verdict,
            )
        )
    return records
