# backend/app/services/stats.py
"""
Maximum-likelihood fits (logistic, Weibull, lognormal) and the two-sample
Cramér-von Mises test with permutation p-values.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from scipy import special
from scipy import stats as sps

from app import rng as rngs
from app.exceptions import FitConvergenceError, FitError, SampleSizeError
from app.models import FitResult, GofResult

logger = logging.getLogger(__name__)

MIN_SAMPLES = 8
MAX_ITERATIONS = 200
GRADIENT_TOL = 1e-8
LOGLIK_SLACK = 1e-13

# label-shuffle matrix entries per permutation batch
_BATCH_CELLS = 2_000_000


def _prepare(samples, family: str, positive: bool = False) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_SAMPLES:
        raise SampleSizeError(int(x.size), MIN_SAMPLES, f"samples for a {family} fit")
    if not np.all(np.isfinite(x)):
        raise FitError(f"{family} fit needs finite samples")
    if positive and np.any(x <= 0):
        raise FitError(f"{family} fit needs samples > 0")
    return x


# --- logistic -------------------------------------------------------------


def _logistic_loglik(x: np.ndarray, mu: float, s: float) -> float:
    z = (x - mu) / s
    return float(np.sum(-z - math.log(s) - 2 * np.logaddexp(0.0, -z)))


def _logistic_derivatives(x: np.ndarray, mu: float, s: float):
    z = (x - mu) / s
    t = np.tanh(z / 2)
    u = 1 - t * t
    grad = np.array([t.sum() / s, np.sum(z * t - 1) / s])
    hess = np.array(
        [
            [-u.sum() / (2 * s * s), -np.sum(t + z * u / 2) / (s * s)],
            [-np.sum(t + z * u / 2) / (s * s), np.sum(1 - 2 * z * t - z * z * u / 2) / (s * s)],
        ]
    )
    return grad, hess


def fit_logistic(samples) -> FitResult:
    """
    Newton iteration on (μ, s) from the moment estimates μ0 = mean,
    s0 = √3·std/π. Converged when the norm of the log-likelihood gradient
    (summed over samples, not averaged) is below 1e-8.
    """
    x = _prepare(samples, "logistic")
    n = x.size
    mu, s = float(x.mean()), math.sqrt(3) * float(x.std()) / math.pi
    if s == 0:
        raise FitError("logistic fit needs samples with nonzero spread")

    loglik = _logistic_loglik(x, mu, s)
    for iteration in range(1, MAX_ITERATIONS + 1):
        grad, hess = _logistic_derivatives(x, mu, s)
        if np.linalg.norm(grad) < GRADIENT_TOL:
            logger.debug("logistic fit converged after %d iterations", iteration - 1)
            return FitResult(
                family="logistic",
                params={"mu": mu, "s": s},
                loglik=loglik,
                sample_count=n,
                iterations=iteration - 1,
            )
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad * s * s / n
        if grad @ step <= 0:
            # Hessian not negative definite here: plain gradient ascent
            step = grad * s * s / n

        scale = 1.0
        while scale >= 1e-12:
            new_mu, new_s = mu + scale * step[0], s + scale * step[1]
            if new_s > 0:
                new_loglik = _logistic_loglik(x, new_mu, new_s)
                # near the optimum the gain drops below the rounding of the sum
                if new_loglik >= loglik - LOGLIK_SLACK * abs(loglik):
                    break
            scale /= 2
        else:
            raise FitConvergenceError("logistic", iteration, {"mu": mu, "s": s})
        mu, s, loglik = new_mu, new_s, new_loglik

    raise FitConvergenceError("logistic", MAX_ITERATIONS, {"mu": mu, "s": s})


# --- Weibull --------------------------------------------------------------


def _weibull_profile(b: float, log_y: np.ndarray, mean_log: float) -> tuple[float, float]:
    """Profile score for the shape and its derivative; y is scaled so max(y) = 1."""
    w = np.exp(b * log_y)
    sw = w.sum()
    m1 = np.sum(w * log_y) / sw
    m2 = np.sum(w * log_y * log_y) / sw
    return m1 - 1 / b - mean_log, (m2 - m1 * m1) + 1 / (b * b)


def fit_weibull(samples) -> FitResult:
    """
    Shape B by safeguarded Newton on the profile likelihood, scale in closed form
    A = (mean x^B)^(1/B).
    """
    x = _prepare(samples, "weibull", positive=True)
    peak = float(x.max())
    log_y = np.log(x / peak)
    mean_log = float(log_y.mean())
    spread = float(log_y.std())
    b = 1.2 / spread if spread > 0 else 1.0

    lo, hi = 0.0, math.inf
    for iteration in range(1, MAX_ITERATIONS + 1):
        value, slope = _weibull_profile(b, log_y, mean_log)
        if value < 0:
            lo = b
        else:
            hi = b
        nxt = b - value / slope
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi) if math.isfinite(hi) else 2 * b
        if abs(nxt - b) <= 1e-12 * max(1.0, b):
            b = nxt
            a = peak * float(np.mean(np.exp(b * log_y))) ** (1 / b)
            loglik = float(np.sum(np.log(b / a) + (b - 1) * np.log(x / a) - (x / a) ** b))
            logger.debug("weibull fit converged after %d iterations (A=%.4g, B=%.4g)", iteration, a, b)
            return FitResult(
                family="weibull",
                params={"A": a, "B": b},
                loglik=loglik,
                sample_count=int(x.size),
                iterations=iteration,
            )
        b = nxt

    raise FitConvergenceError("weibull", MAX_ITERATIONS, {"B": b})


# --- lognormal ------------------------------------------------------------


def fit_lognormal(samples) -> FitResult:
    """μ and σ of the log-samples (population σ). Zero spread is flagged degenerate."""
    x = _prepare(samples, "lognormal", positive=True)
    logs = np.log(x)
    mu = float(logs.mean())
    sigma = float(logs.std())
    if sigma == 0:
        return FitResult(
            family="lognormal",
            params={"mu": mu, "sigma": 0.0},
            loglik=math.inf,
            sample_count=int(x.size),
            degenerate=True,
        )
    loglik = float(np.sum(sps.norm.logpdf(logs, mu, sigma) - logs))
    return FitResult(family="lognormal", params={"mu": mu, "sigma": sigma}, loglik=loglik, sample_count=int(x.size))


# --- distribution helpers -------------------------------------------------


def logistic_cdf(x, mu: float, s: float):
    return special.expit((np.asarray(x, dtype=float) - mu) / s)


def weibull_cdf(x, a: float, b: float):
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    return -np.expm1(-((x / a) ** b))


def lognormal_cdf(x, mu: float, sigma: float):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    positive = x > 0
    out[positive] = sps.norm.cdf((np.log(x[positive]) - mu) / sigma)
    return out


def fit_cdf(fit: FitResult, x):
    p = fit.params
    if fit.family == "logistic":
        return logistic_cdf(x, p["mu"], p["s"])
    if fit.family == "weibull":
        return weibull_cdf(x, p["A"], p["B"])
    return lognormal_cdf(x, p["mu"], p["sigma"])


def draw_from_fit(fit: FitResult, rng: np.random.Generator, size: int) -> np.ndarray:
    p = fit.params
    if fit.family == "logistic":
        return rng.logistic(p["mu"], p["s"], size)
    if fit.family == "weibull":
        return p["A"] * rng.weibull(p["B"], size)
    return rng.lognormal(p["mu"], p["sigma"], size)


# --- Cramér-von Mises -----------------------------------------------------


class _CvmKernel:
    """Statistic for arbitrary labelings of a fixed pooled sample."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        pooled = np.concatenate([x, y])
        order = np.argsort(pooled, kind="stable")
        values = pooled[order]
        self.n, self.m = x.size, y.size
        self.labels = (order < x.size)
        # last index of each tie group: ECDFs are evaluated after the whole group
        self.group_end = np.searchsorted(values, values, side="right") - 1
        self.factor = self.n * self.m / (self.n + self.m) ** 2

    def statistic(self, labels: np.ndarray) -> np.ndarray:
        labels = np.atleast_2d(labels)
        cx = np.cumsum(labels, axis=1)[:, self.group_end]
        cy = (self.group_end + 1)[None, :] - cx
        diff = cx / self.n - cy / self.m
        return self.factor * np.sum(diff * diff, axis=1)


def cvm_statistic(x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    kernel = _CvmKernel(x, y)
    return float(kernel.statistic(kernel.labels)[0])


def cvm_two_sample(
    x,
    y,
    n_permutations: int = 9999,
    seed: int = 0,
    alpha: float = 0.01,
    threads: int = 1,
    label: Optional[str] = None,
) -> GofResult:
    """
    T = NM/(N+M)² Σ (F_N − G_M)² over the pooled points, p-value from label
    shuffles: (1 + #{T* ≥ T}) / (1 + n_permutations). Batch b shuffles with the
    (seed, b) substream, so the p-value does not depend on `threads`.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    for name, arr in (("x", x), ("y", y)):
        if arr.size < MIN_SAMPLES:
            raise SampleSizeError(int(arr.size), MIN_SAMPLES, f"{name} samples for the CvM test")
    if n_permutations < 1:
        raise SampleSizeError(n_permutations, 1, "permutations")

    kernel = _CvmKernel(x, y)
    observed = float(kernel.statistic(kernel.labels)[0])
    # floating noise between permutations that are ties of the observed labeling
    threshold = observed * (1 - 1e-12)

    batch = max(1, _BATCH_CELLS // kernel.labels.size)
    starts = list(range(0, n_permutations, batch))

    def count(index: int) -> int:
        size = min(batch, n_permutations - starts[index])
        gen = rngs.substream(seed, index, rngs.PERMUTATION)
        shuffled = np.tile(kernel.labels, (size, 1))
        gen.permuted(shuffled, axis=1, out=shuffled)
        return int(np.count_nonzero(kernel.statistic(shuffled) >= threshold))

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            exceed = sum(pool.map(count, range(len(starts))))
    else:
        exceed = sum(count(i) for i in range(len(starts)))

    p_value = (1 + exceed) / (1 + n_permutations)
    try:
        asymptotic = float(np.clip(sps.cramervonmises_2samp(x, y, method="asymptotic").pvalue, 0.0, 1.0))
    except (ValueError, FloatingPointError):
        logger.exception("asymptotic CvM p-value failed")
        asymptotic = None

    decision = "pass" if p_value > alpha else "reject"
    logger.info("CvM %s: T=%.5g p=%.4f (%d permutations) -> %s", label or "", observed, p_value, n_permutations, decision)
    return GofResult(
        label=label,
        T=observed,
        p_value=p_value,
        n_permutations=n_permutations,
        alpha=alpha,
        decision=decision,
        asymptotic_p_value=asymptotic,
        x_count=int(x.size),
        y_count=int(y.size),
    )


def fit_gof(
    samples,
    fit: FitResult,
    seed: int = 0,
    n_permutations: int = 9999,
    alpha: float = 0.01,
    threads: int = 1,
) -> GofResult:
    """Two-sample CvM of the data against an equally sized sample drawn from the fitted law."""
    x = np.asarray(samples, dtype=float).ravel()
    reference = draw_from_fit(fit, rngs.substream(seed, 0, rngs.REFERENCE), x.size)
    return cvm_two_sample(x, reference, n_permutations, seed, alpha, threads, label=f"{fit.family} fit")
