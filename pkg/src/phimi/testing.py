"""Independence tests built on the statistic S_n = 2n I_hat.

Three calibration routes for the phi-MI statistic:

* ``"chisq"``  -- exact chi-square law with (K1-1)(K2-1) degrees of
  freedom (finite-discrete models only);
* ``"ztz"``    -- Monte-Carlo quantile of the Z'Z limit law (exponential
  bilinear models with the KL divergence only);
* ``"bootstrap"`` -- resampling from the product of the empirical
  margins, which breaks the pairing and mimics the null whatever the
  model.

Classical noncorrelation tests (Pearson, Spearman, Kendall) are provided
as baselines with their textbook calibrations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .asymptotics import (
    chi2_quantile,
    chi2_sf,
    chisq_df_finite,
    covariances_under_h0,
    limit_quantile_ztz,
)
from .errors import DegenerateInputError, OptimFailureError, RouteMismatchError
from .estimator import ObjectiveContext, PairedSample, estimate
from .models import ExpBilinearModel, FiniteDiscreteModel

__all__ = [
    "TestResult",
    "BootstrapConfig",
    "ROUTES",
    "test_independence",
    "bootstrap_statistics",
    "bootstrap_critical",
    "pearson_test",
    "spearman_test",
    "kendall_test",
    "kendall_tau",
]

ROUTES = ("ztz", "chisq", "bootstrap")


@dataclass(frozen=True)
class TestResult:
    """Outcome of one independence test; reject iff statistic > critical."""

    __test__ = False  # not a pytest case, despite the name

    statistic: float
    critical_value: float
    p_value: float | None
    reject: bool
    route: str
    alpha: float


@dataclass(frozen=True)
class BootstrapConfig:
    b_reps: int = 1000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.b_reps < 100:
            raise ValueError("b_reps must be at least 100")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")


def test_independence(ctx: ObjectiveContext, route: str, alpha: float = 0.05, *,
                      cov=None, margins=None, m: int = 200_000,
                      n_draws: int = 10_000, seed: int = 0,
                      bootstrap: BootstrapConfig | None = None) -> TestResult:
    """Test H0: X independent of Y with S_n = 2n I_hat at level alpha.

    ``cov`` may carry precomputed asymptotic covariances for the ztz
    route; otherwise they are estimated from ``margins`` (default: the
    empirical margins of the observed sample).
    """
    if route not in ROUTES:
        raise RouteMismatchError(f"unknown route {route!r}; choose from {ROUTES}")
    est = estimate(ctx, seed=seed)
    stat = 2.0 * ctx.n * est.i_hat

    if route == "chisq":
        model = ctx.model
        if not isinstance(model, FiniteDiscreteModel):
            raise RouteMismatchError("chisq route requires a finite-discrete model")
        df = chisq_df_finite(model.k1, model.k2)
        crit = chi2_quantile(1.0 - alpha, df)
        p_value = chi2_sf(stat, df)
    elif route == "ztz":
        if not isinstance(ctx.model, ExpBilinearModel):
            raise RouteMismatchError("ztz route requires an exponential bilinear model")
        if ctx.divergence.gamma != 1.0:
            raise RouteMismatchError("ztz route is derived for the KL divergence only")
        if cov is None:
            if margins is None:
                margins = (np.asarray(ctx.sample.x, dtype=float),
                           np.asarray(ctx.sample.y, dtype=float))
            cov = covariances_under_h0(ctx.model, margins[0], margins[1], m=m, seed=seed)
        crit = limit_quantile_ztz(cov, alpha, n_draws=n_draws, seed=seed)
        p_value = None
    else:
        cfg = bootstrap or BootstrapConfig(alpha=alpha, seed=seed)
        if cfg.alpha != alpha:
            cfg = BootstrapConfig(cfg.b_reps, alpha, cfg.seed)
        draws = bootstrap_statistics(ctx, cfg)
        crit = float(np.quantile(draws, 1.0 - cfg.alpha, method="linear"))
        p_value = (1.0 + np.count_nonzero(draws >= stat)) / (cfg.b_reps + 1.0)

    return TestResult(stat, float(crit), p_value, bool(stat > crit), route, alpha)


# not a pytest case, despite the name
test_independence.__test__ = False


def bootstrap_statistics(ctx: ObjectiveContext, cfg: BootstrapConfig) -> np.ndarray:
    """B replicates of S*_n under resampling from the product empirical law.

    Each replicate draws the x side and the y side independently with
    replacement (separate RNG streams), so the pairing is broken; rank
    and cell statistics are recomputed on each replicate sample.  Fails
    if more than 5% of the replicate optimizations do not converge.
    """
    n = ctx.n
    x = np.asarray(ctx.sample.x)
    y = np.asarray(ctx.sample.y)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.b_reps)
    out = np.empty(cfg.b_reps)
    failures = 0
    for b, seq in enumerate(seeds):
        rng_x, rng_y = (np.random.default_rng(child) for child in seq.spawn(2))
        resample = PairedSample(x[rng_x.integers(0, n, n)],
                                y[rng_y.integers(0, n, n)], ctx.sample.kind)
        ctx_b = ObjectiveContext(ctx.divergence, ctx.model, resample)
        est = estimate(ctx_b, seed=b)
        failures += not est.converged
        out[b] = 2.0 * n * est.i_hat
    if failures > 0.05 * cfg.b_reps:
        raise OptimFailureError(
            f"{failures}/{cfg.b_reps} bootstrap replicates failed to converge")
    return out


def bootstrap_critical(ctx: ObjectiveContext, cfg: BootstrapConfig) -> float:
    """(1 - alpha) quantile of the bootstrap statistic sequence."""
    draws = bootstrap_statistics(ctx, cfg)
    return float(np.quantile(draws, 1.0 - cfg.alpha, method="linear"))


# -- baseline noncorrelation tests ----------------------------------------


def _check_baseline_sample(sample: PairedSample):
    if sample.kind != "real":
        raise DegenerateInputError("noncorrelation tests need real-valued data")
    if sample.n < 4:
        raise DegenerateInputError("need at least four observations")
    x = np.asarray(sample.x, dtype=float)
    y = np.asarray(sample.y, dtype=float)
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise DegenerateInputError("zero variance in x or y")
    return x, y


def _t_test_result(r: float, n: int, alpha: float, route: str) -> TestResult:
    df = n - 2
    crit = float(sps.t.ppf(1.0 - alpha / 2.0, df))
    if 1.0 - r * r <= 1e-15:
        return TestResult(np.inf, crit, 0.0, True, route, alpha)
    t = abs(r) * np.sqrt(df / (1.0 - r * r))
    p = 2.0 * float(sps.t.sf(t, df))
    return TestResult(float(t), crit, p, bool(t > crit), route, alpha)


def pearson_test(sample: PairedSample, alpha: float = 0.05) -> TestResult:
    """Two-sided Pearson noncorrelation test, t = r sqrt(n-2)/sqrt(1-r^2)."""
    x, y = _check_baseline_sample(sample)
    r = float(np.corrcoef(x, y)[0, 1])
    return _t_test_result(r, sample.n, alpha, "pearson")


def spearman_test(sample: PairedSample, alpha: float = 0.05) -> TestResult:
    """Pearson's t statistic applied to the mid-rank correlation."""
    x, y = _check_baseline_sample(sample)
    rx = sps.rankdata(x, method="average")
    ry = sps.rankdata(y, method="average")
    r = float(np.corrcoef(rx, ry)[0, 1])
    return _t_test_result(r, sample.n, alpha, "spearman")


def kendall_test(sample: PairedSample, alpha: float = 0.05) -> TestResult:
    """Kendall tau_b with the normal approximation
    z = 3 tau sqrt(n(n-1)) / sqrt(2(2n+5))."""
    x, y = _check_baseline_sample(sample)
    n = sample.n
    tau = kendall_tau(x, y)
    z = abs(3.0 * tau * np.sqrt(n * (n - 1.0)) / np.sqrt(2.0 * (2.0 * n + 5.0)))
    crit = float(sps.norm.ppf(1.0 - alpha / 2.0))
    p = 2.0 * float(sps.norm.sf(z))
    return TestResult(float(z), crit, p, bool(z > crit), "kendall", alpha)


def kendall_tau(x, y) -> float:
    """tau_b by merge-sort concordance counting, O(n log n), tie-corrected."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = x.size
    order = np.lexsort((y, x))
    xs = x[order]
    ys = y[order]

    n0 = n * (n - 1) // 2
    ties_x = _tie_pair_count(xs)
    ties_xy = _tie_pair_count(xs + 1j * ys)  # joint runs of equal (x, y)
    swaps = _count_inversions(ys.tolist())
    ties_y = _tie_pair_count(np.sort(ys))
    denom = (n0 - ties_x) * (n0 - ties_y)
    if denom <= 0:
        raise DegenerateInputError("all x or all y values tied")
    con_minus_dis = n0 - ties_x - ties_y + ties_xy - 2 * swaps
    return con_minus_dis / np.sqrt(denom)


def _tie_pair_count(sorted_vals) -> int:
    """Number of tied pairs sum t(t-1)/2 over runs of equal adjacent values."""
    total = 0
    run = 1
    flat = np.asarray(sorted_vals).ravel()
    for i in range(1, flat.size):
        if flat[i] == flat[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


def _count_inversions(seq: list) -> int:
    """Merge-sort inversion count; equal elements are not inversions."""
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left = seq[:mid]
    right = seq[mid:]
    count = _count_inversions(left) + _count_inversions(right)
    i = j = k = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            seq[k] = left[i]
            i += 1
        else:
            seq[k] = right[j]
            count += len(left) - i
            j += 1
        k += 1
    while i < len(left):
        seq[k] = left[i]
        i += 1
        k += 1
    while j < len(right):
        seq[k] = right[j]
        j += 1
        k += 1
    return count
