"""Shared statistical test helpers: GOF tests and quadrature oracles."""

import numpy as np
from scipy import special as sp
from scipy import stats


def chi_square_gof(draws, pmf, alpha=0.01, min_expected=5.0):
    """Chi-square goodness-of-fit of integer draws against a pmf callable.

    Pools right-tail bins until every expected count reaches
    ``min_expected``.  Returns the p-value.
    """
    draws = np.asarray(draws)
    n = draws.size
    kmax = int(draws.max())
    support = np.arange(kmax + 1)
    probs = pmf(support)
    tail = max(0.0, 1.0 - probs.sum())
    expected = np.append(probs * n, tail * n)
    observed = np.append(np.bincount(draws, minlength=kmax + 1).astype(float), 0.0)

    # pool from the right, then drop any tiny leading bins
    exp_pooled, obs_pooled = [], []
    acc_e = acc_o = 0.0
    for e, o in zip(expected[::-1], observed[::-1]):
        acc_e += e
        acc_o += o
        if acc_e >= min_expected:
            exp_pooled.append(acc_e)
            obs_pooled.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e > 0 and exp_pooled:
        exp_pooled[-1] += acc_e
        obs_pooled[-1] += acc_o
    expected = np.array(exp_pooled[::-1])
    observed = np.array(obs_pooled[::-1])
    assert expected.size >= 2, "support too coarse for a chi-square test"

    stat = np.sum((observed - expected) ** 2 / expected)
    pval = stats.chi2.sf(stat, df=expected.size - 1)
    assert pval > alpha, f"chi-square GOF rejected: stat={stat:.2f}, p={pval:.4g}"
    return pval


def ks_against_cdf(draws, cdf, alpha=0.01):
    """Kolmogorov-Smirnov test of draws against a CDF callable."""
    res = stats.kstest(draws, cdf)
    assert res.pvalue > alpha, f"KS rejected: D={res.statistic:.4g}, p={res.pvalue:.4g}"
    return res.pvalue


def gamma_cdf(x, shape, rate):
    """Regularized lower incomplete gamma, the Gamma(shape, rate) CDF."""
    return sp.gammainc(shape, rate * np.asarray(x))


def truncated_gamma_mean_quadrature(shape, rate, lo, hi):
    """Mean of a truncated gamma by adaptive quadrature.

    Handles the integrable x^(shape-1) endpoint singularity at lo = 0
    for shape < 1; the density is scaled at an interior point to avoid
    overflow before normalizing.
    """
    from scipy.integrate import quad

    ref = max(lo + 0.25 * (min(hi, lo + 10.0 / rate) - lo), 1e-12)
    log_ref = (shape - 1.0) * np.log(ref) - rate * ref

    def kernel(x):
        return np.exp((shape - 1.0) * np.log(x) - rate * x - log_ref)

    mass, _ = quad(kernel, lo, hi, limit=200)
    first, _ = quad(lambda x: x * kernel(x), lo, hi, limit=200)
    return first / mass


def grid_cdf(grid, logpdf_values):
    """Normalized CDF on a grid from unnormalized log-density values.

    Trapezoid accumulation; returns a callable suitable for kstest.
    """
    logpdf = np.asarray(logpdf_values, dtype=float)
    logpdf = logpdf - logpdf.max()
    pdf = np.exp(logpdf)
    widths = np.diff(grid)
    seg = 0.5 * (pdf[1:] + pdf[:-1]) * widths
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    cum /= cum[-1]

    def cdf(x):
        return np.interp(x, grid, cum)

    return cdf
