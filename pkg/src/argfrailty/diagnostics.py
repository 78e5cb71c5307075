"""Fit and comparison metrics computed from chains and predictions.

Point-fit errors (MAE, MAPE, MedAE) compare observed counts against the
posterior-mean cell rate; mixing is summarized by an effective sample
size per fitted cell; and model fit by DIC (plug-in effective-parameter
count at the posterior-mean rate) and WAIC (variance form).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sp


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


def mae(y, y_hat):
    """Mean absolute error over all cells."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise MetricError("shape mismatch between observations and fits")
    return float(np.mean(np.abs(y - y_hat)))


def mape(y, y_hat):
    """Mean absolute percentage error over cells with positive counts.

    Zero-count cells are excluded from both the numerator and the cell
    count; all-zero observations leave the metric undefined.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise MetricError("shape mismatch between observations and fits")
    mask = y > 0
    if not mask.any():
        raise MetricError("MAPE is undefined when every observed count is zero")
    return float(100.0 * np.mean(np.abs((y[mask] - y_hat[mask]) / y[mask])))


def medae(y, y_hat):
    """Median absolute error (midpoint convention for even-length sets)."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.size == 0:
        raise MetricError("MedAE is undefined on an empty cell set")
    if y.shape != y_hat.shape:
        raise MetricError("shape mismatch between observations and fits")
    return float(np.median(np.abs(y - y_hat)))


def ess(series):
    """Effective sample size n / (1 + 2 sum rho_k).

    Autocorrelations are truncated by the initial-positive-sequence
    rule on paired sums; a constant series counts as fully independent
    (with a warning) and the result is clipped into (0, n].
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise MetricError("ESS needs a 1-D series of at least 10 draws")
    n = x.size
    x = x - x.mean()
    var = float(x @ x) / n
    if var <= 0 or not np.isfinite(var):
        warnings.warn("constant series: treating every draw as independent", stacklevel=2)
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    tau = _paired_truncation_time(rho)
    return float(min(n, max(n / tau, 1e-12)))


def _paired_truncation_time(rho):
    """Integrated autocorrelation time with paired-sum truncation.

    Accumulates Gamma_j = rho_{2j} + rho_{2j+1} while positive, giving
    tau = -1 + 2 sum_j Gamma_j = 1 + 2 sum_k rho_k up to the cut.
    """
    n = rho.size
    tau = -1.0
    j = 0
    while 2 * j + 1 < n:
        pair = rho[2 * j] + rho[2 * j + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        j += 1
    return max(tau, 1e-12)


def ess_matrix(draws, chunk=2048):
    """Per-cell ESS for a (draws, cells...) array; returns the cell shape."""
    arr = np.asarray(draws, dtype=float)
    flat = arr.reshape(arr.shape[0], -1)
    out = np.empty(flat.shape[1])
    for start in range(0, flat.shape[1], chunk):
        stop = min(start + chunk, flat.shape[1])
        for idx in range(start, stop):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                out[idx] = ess(flat[:, idx])
    return out.reshape(arr.shape[1:])


@dataclass
class InfoCriteria:
    dic: float
    p_d: float
    waic: float
    p_w: float


def dic_waic(log_lik, log_lik_plugin):
    """Information criteria from per-draw, per-cell log likelihoods.

    ``log_lik`` is (draws, cells); ``log_lik_plugin`` is the per-cell
    log likelihood at the plug-in parameter (the posterior-mean cell
    rate).  DIC = mean deviance + p_d with p_d the mean-minus-plug-in
    gap; WAIC = -2 (lppd - p_w) with p_w the summed per-cell variance
    of the log likelihood over draws.
    """
    ll = np.asarray(log_lik, dtype=float)
    if ll.ndim != 2:
        raise MetricError("log_lik must be (draws, cells)")
    plug = np.asarray(log_lik_plugin, dtype=float).ravel()
    if plug.size != ll.shape[1]:
        raise MetricError("plug-in log likelihood must have one entry per cell")
    if not np.all(np.isfinite(ll)):
        raise MetricError("log likelihoods must be finite")
    s = ll.shape[0]

    mean_dev = -2.0 * float(ll.sum(axis=1).mean())
    plug_dev = -2.0 * float(plug.sum())
    p_d = mean_dev - plug_dev
    dic = mean_dev + p_d

    lppd = float(np.sum(sp.logsumexp(ll, axis=0) - np.log(s)))
    p_w = float(np.sum(ll.var(axis=0, ddof=1))) if s > 1 else 0.0
    waic = -2.0 * (lppd - p_w)
    return InfoCriteria(dic=dic, p_d=p_d, waic=waic, p_w=p_w)


def poisson_log_lik(y, rate):
    """Per-cell Poisson log pmf of counts at the given rates."""
    y = np.asarray(y, dtype=float)
    rate = np.asarray(rate, dtype=float)
    return sp.xlogy(y, rate) - rate - sp.gammaln(y + 1.0)


def summarize_scalar(draws):
    """Min / quartiles / mean / max summary of a scalar parameter's draws."""
    d = np.asarray(draws, dtype=float)
    return {
        "min": float(d.min()),
        "q1": float(np.quantile(d, 0.25)),
        "median": float(np.median(d)),
        "mean": float(d.mean()),
        "q3": float(np.quantile(d, 0.75)),
        "max": float(d.max()),
    }


@dataclass
class FitSummary:
    """Headline metrics for one fitted chain."""

    mae: float
    mape: float | None
    medae: float
    dic: float
    p_d: float
    waic: float
    p_w: float
    ess_mean: float | None
    n_draws: int
    beta_acceptance: float | None
    parameters: dict = field(default_factory=dict)
    ess_cells: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        out = {
            "mae": self.mae,
            "mape": self.mape,
            "medae": self.medae,
            "dic": self.dic,
            "p_d": self.p_d,
            "waic": self.waic,
            "p_w": self.p_w,
            "ess_mean": self.ess_mean,
            "n_draws": self.n_draws,
            "beta_acceptance": self.beta_acceptance,
            "parameters": self.parameters,
        }
        return out

    def to_table(self):
        """Plain-text rendering of the summary for terminals and logs."""
        lines = [f"{'metric':<10}{'value':>14}"]
        rows = [("MAE", self.mae), ("MAPE", self.mape), ("MedAE", self.medae),
                ("DIC", self.dic), ("p_d", self.p_d), ("WAIC", self.waic),
                ("p_w", self.p_w), ("mean ESS", self.ess_mean)]
        for name, value in rows:
            shown = "-" if value is None else f"{value:.4f}"
            lines.append(f"{name:<10}{shown:>14}")
        lines.append("")
        header = f"{'parameter':<10}" + "".join(
            f"{col:>10}" for col in ("min", "q1", "median", "mean", "q3", "max"))
        lines.append(header)
        for name, stats_row in self.parameters.items():
            lines.append(
                f"{name:<10}" + "".join(
                    f"{stats_row[c]:>10.4g}"
                    for c in ("min", "q1", "median", "mean", "q3", "max"))
            )
        return "\n".join(lines)


def fit_summary(chain, data, compute_cell_ess=True):
    """Assemble the FitSummary for a chain against its training data."""
    y_hat = chain.fitted_mean
    try:
        mape_val = mape(data.y, y_hat)
    except MetricError:
        mape_val = None

    crit = dic_waic(chain.log_lik, poisson_log_lik(data.y, y_hat).ravel())

    params = {
        "c": summarize_scalar(chain.c),
        "kappa": summarize_scalar(chain.kappa),
        "rho": summarize_scalar(chain.rho),
    }
    if chain.beta is not None:
        for j in range(chain.beta.shape[1]):
            params[f"beta_{j + 1}"] = summarize_scalar(chain.beta[:, j])

    ess_cells = None
    ess_mean = None
    if compute_cell_ess and chain.u is not None and chain.n_draws >= 10:
        ess_cells = ess_matrix(chain.rate_draws(data))
        ess_mean = float(ess_cells.mean())

    accept = None
    if chain.n_proposals:
        accept = chain.beta_accepted / chain.n_proposals

    return FitSummary(
        mae=mae(data.y, y_hat),
        mape=mape_val,
        medae=medae(data.y, y_hat),
        dic=crit.dic,
        p_d=crit.p_d,
        waic=crit.waic,
        p_w=crit.p_w,
        ess_mean=ess_mean,
        n_draws=chain.n_draws,
        beta_acceptance=accept,
        parameters=params,
        ess_cells=ess_cells,
    )
