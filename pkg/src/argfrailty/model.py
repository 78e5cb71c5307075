"""Model state, priors, weight-matrix parameterization, and stationarity checks.

The observation layer is Poisson with rate U * E, where E is either
exp(x'beta) from covariates or a fixed positive offset.  Frailties U
follow a vector autoregressive gamma process on the neighbor graph: the
implied m-by-m weight matrix has rho on the diagonal and kappa * w_ij on
graph edges, and the process is stationary whenever every row sum (or
every column sum) of that matrix stays in (0, 1].

All time and location indices in code are 0-based; files are 1-based.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sp

from .graph import incoming_weight_sums


class NumericError(RuntimeError):
    """A computation produced a non-finite value; the message names the factor."""


class SpecError(ValueError):
    """Invalid model specification or incompatible data shapes."""


# (alpha_c, theta_c) for the scale, (a_kappa, b_kappa) for the neighbor
# weight, and (a_rho, b_rho) for the self weight where applicable.
HYPERPARAMETER_PRESETS = {
    "hypara1": {"prior_c": (2.0, 10.0), "prior_kappa": (0.55, 1.0), "prior_rho": (0.4, 1.0)},
    "hypara2": {"prior_c": (2.0, 50.0), "prior_kappa": (0.4, 1.0), "prior_rho": (0.55, 1.0)},
    "hypara3": {"prior_c": (2.0, 10.0), "prior_kappa": (0.9, 1.0), "prior_rho": None},
    "hypara4": {"prior_c": (2.0, 50.0), "prior_kappa": (0.4, 1.0), "prior_rho": None},
}


@dataclass
class ModelSpec:
    """Fixed hyperparameters and priors.

    ``prior_rho=None`` switches the self-excitation term off entirely
    (the diagonal of the weight matrix is pinned at zero), and
    ``beta_prior=None`` replaces exp(x'beta) by the dataset offset.
    """

    alpha: float = 1.0001
    prior_c: tuple = (2.0, 10.0)
    prior_kappa: tuple = (0.55, 1.0)
    prior_rho: tuple | None = (0.4, 1.0)
    beta_prior: tuple | None = None  # (mean vector, covariance matrix)

    @property
    def autoreg(self):
        return self.prior_rho is not None

    @property
    def has_covariates(self):
        return self.beta_prior is not None

    @property
    def p(self):
        return 0 if self.beta_prior is None else len(np.atleast_1d(self.beta_prior[0]))

    def validate(self):
        if not self.alpha > 1:
            raise SpecError(f"alpha must exceed 1 (got {self.alpha})")
        for name, pair in (("prior_c", self.prior_c), ("prior_kappa", self.prior_kappa)):
            if not (pair[0] > 0 and pair[1] > 0):
                raise SpecError(f"{name} parameters must be positive")
        if self.prior_rho is not None and not (self.prior_rho[0] > 0 and self.prior_rho[1] > 0):
            raise SpecError("prior_rho parameters must be positive")
        if self.beta_prior is not None:
            mu = np.atleast_1d(np.asarray(self.beta_prior[0], dtype=float))
            cov = np.atleast_2d(np.asarray(self.beta_prior[1], dtype=float))
            if cov.shape != (mu.size, mu.size):
                raise SpecError("beta prior covariance shape mismatch")
            if not np.allclose(cov, cov.T):
                raise SpecError("beta prior covariance must be symmetric")
            if np.any(np.linalg.eigvalsh(cov) <= 0):
                raise SpecError("beta prior covariance must be positive definite")
        return self

    @classmethod
    def from_preset(cls, name, alpha=1.0001, beta_prior=None):
        if name not in HYPERPARAMETER_PRESETS:
            raise SpecError(f"unknown hyperparameter preset {name!r}")
        return cls(alpha=alpha, beta_prior=beta_prior, **HYPERPARAMETER_PRESETS[name]).validate()


@dataclass
class CountDataset:
    """Observed counts with optional covariates or a fixed rate offset.

    ``y`` is (T, m); ``x`` is (T, m, p) when covariates drive the rate,
    otherwise ``offset`` (T, m) multiplies the frailty directly (all
    ones when absent).
    """

    y: np.ndarray
    x: np.ndarray | None = None
    offset: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.ndim != 2:
            raise SpecError("y must be a (T, m) matrix")
        if np.any(self.y < 0):
            raise SpecError("counts must be nonnegative")
        if self.x is not None and self.offset is not None:
            raise SpecError("provide covariates or an offset, not both")
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=float)
            if self.x.shape[:2] != self.y.shape:
                raise SpecError("covariate array must be (T, m, p)")
        if self.offset is not None:
            self.offset = np.asarray(self.offset, dtype=float)
            if self.offset.shape != self.y.shape or np.any(self.offset <= 0):
                raise SpecError("offset must be positive with shape (T, m)")
        self._ones = np.ones_like(self.y, dtype=float)

    @property
    def T(self):
        return self.y.shape[0]

    @property
    def m(self):
        return self.y.shape[1]

    def rate_multiplier(self, beta=None):
        """The factor E multiplying the frailty in the Poisson rate."""
        if self.x is not None:
            if beta is None:
                raise SpecError("covariate model requires beta")
            return np.exp(self.x @ np.asarray(beta, dtype=float))
        if self.offset is not None:
            return self.offset
        return self._ones


@dataclass
class ChainState:
    """Current values of every sampled quantity.

    ``U`` is (T, m) and ``Z`` is (T-1, m, 1 + h_max) with slot 0 holding
    the self latent (identically zero when the spec disables it) and
    slot j >= 1 the latent attached to neighbor j-1; padding slots past a
    location's neighbor count stay zero.  ``Z`` is None when T = 1.
    """

    c: float
    kappa: float
    rho: float
    U: np.ndarray
    Z: np.ndarray | None = None
    beta: np.ndarray | None = None

    def validate(self):
        if not self.c > 0:
            raise SpecError("c must be positive")
        if self.kappa < 0 or self.rho < 0:
            raise SpecError("kappa and rho must be nonnegative")
        if self.rho + self.kappa > 1 + 1e-12 or self.rho + self.kappa <= 0:
            raise SpecError(f"rho + kappa = {self.rho + self.kappa} outside (0, 1]")
        if np.any(self.U <= 0):
            raise SpecError("frailties must be strictly positive")
        if self.Z is not None and np.any(self.Z < 0):
            raise SpecError("latent counts must be nonnegative")
        return self

    def copy(self):
        return ChainState(
            c=self.c,
            kappa=self.kappa,
            rho=self.rho,
            U=self.U.copy(),
            Z=None if self.Z is None else self.Z.copy(),
            beta=None if self.beta is None else self.beta.copy(),
        )


# ---------------------------------------------------------------------------
# weight-matrix views and stationarity


def dense_weight_matrix(graph, rho, kappa):
    """Materialize the m-by-m weight matrix (tests and small diagnostics only)."""
    m = graph.m
    V = np.zeros((m, m))
    for i in range(m):
        V[i, graph.neighbors[i]] = kappa * graph.weights[i]
        V[i, i] += rho
    return V


@dataclass
class StationarityCheck:
    stationary: bool
    reason: str
    row_sums: np.ndarray = field(repr=False, default=None)
    col_sums: np.ndarray = field(repr=False, default=None)

    def __bool__(self):
        return self.stationary


_SUM_TOL = 1e-12


def validate_stationarity(graph, rho, kappa):
    """Check the stationarity conditions of the implied weight matrix.

    The process is stationary when every column sum is at most 1, or
    every row sum is at most 1, with all row sums positive (empty rows
    are permitted only in the directed variant, where those locations
    regenerate fresh each interval).  Never raises: returns a
    StationarityCheck that is truthy when stationary.
    """
    rho = float(rho)
    kappa = float(kappa)
    if rho < 0 or kappa < 0:
        return StationarityCheck(False, f"negative parameters rho={rho}, kappa={kappa}")
    counts = np.array([graph.neighbor_count(i) for i in range(graph.m)])
    row_sums = rho + kappa * (counts > 0)
    col_sums = rho + kappa * incoming_weight_sums(graph)

    zero_rows = np.flatnonzero(row_sums <= 0)
    if zero_rows.size and graph.variant != "directed-ordered":
        return StationarityCheck(
            False, f"location {zero_rows[0]} has zero total weight", row_sums, col_sums
        )
    if rho + kappa <= 0:
        return StationarityCheck(False, "rho + kappa must be positive", row_sums, col_sums)
    if rho + kappa < 1e-8:
        warnings.warn(f"rho + kappa = {rho + kappa:.3e} is nearly degenerate", stacklevel=2)

    rows_ok = np.all(row_sums <= 1 + _SUM_TOL)
    cols_ok = np.all(col_sums <= 1 + _SUM_TOL)
    if rows_ok:
        return StationarityCheck(True, "row sums <= 1", row_sums, col_sums)
    if cols_ok:
        return StationarityCheck(True, "column sums <= 1", row_sums, col_sums)
    return StationarityCheck(
        False,
        f"max row sum {row_sums.max():.6g} > 1 and max column sum {col_sums.max():.6g} > 1",
        row_sums,
        col_sums,
    )


def stationarity_of_matrix(V, allow_zero_rows=False):
    """Row/column-sum stationarity check for an explicit weight matrix."""
    V = np.asarray(V, dtype=float)
    if np.any(V < 0):
        return StationarityCheck(False, "weight matrix has negative entries")
    row_sums = V.sum(axis=1)
    col_sums = V.sum(axis=0)
    if not allow_zero_rows and np.any(row_sums <= 0):
        i = int(np.argmin(row_sums))
        return StationarityCheck(False, f"row {i} sums to zero", row_sums, col_sums)
    if np.all(row_sums <= 1 + _SUM_TOL):
        return StationarityCheck(True, "row sums <= 1", row_sums, col_sums)
    if np.all(col_sums <= 1 + _SUM_TOL):
        return StationarityCheck(True, "column sums <= 1", row_sums, col_sums)
    return StationarityCheck(
        False,
        f"max row sum {row_sums.max():.6g} > 1 and max column sum {col_sums.max():.6g} > 1",
        row_sums,
        col_sums,
    )


def contraction_iterate(V, c, x0, h):
    """Iterate the Laplace-exponent map x -> V' K(x), K_i(x) = x_i / (c x_i + 1).

    Under a stationary weight matrix the max norm of the iterates decays
    like 1 / (c * h), which is the quantitative handle behind the
    stationarity guarantee.
    """
    V = np.asarray(V, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    if np.any(x < 0):
        raise SpecError("starting vector must be nonnegative")
    for _ in range(int(h)):
        x = V.T @ (x / (c * x + 1.0))
    return x


# ---------------------------------------------------------------------------
# conditional moments and rates


def weighted_neighbor_sum(graph, u_row, kappa, rho, autoreg=True):
    """(V u)_i for every i: kappa-weighted neighbor values plus rho * own value."""
    u_row = np.asarray(u_row, dtype=float)
    out = np.empty(graph.m)
    for i in range(graph.m):
        nbr = graph.neighbors[i]
        out[i] = kappa * float(graph.weights[i] @ u_row[nbr]) if nbr.size else 0.0
    if autoreg:
        out += rho * u_row
    return out


def rate_lambda(state, graph, i, t):
    """Latent Poisson rate feeding the transition into U[t, i]; requires t >= 1."""
    if t < 1:
        raise SpecError("the transition rate is defined for t >= 1")
    u_prev = state.U[t - 1]
    nbr = graph.neighbors[i]
    acc = float(graph.weights[i] @ u_prev[nbr]) * state.kappa if nbr.size else 0.0
    return (acc + state.rho * u_prev[i]) / state.c


def conditional_moments(spec, state, graph, t):
    """Mean and variance of U[t] | U[t-1]: alpha*c + (Vu) and alpha*c^2 + 2c(Vu)."""
    if t < 1:
        raise SpecError("conditional moments are defined for t >= 1")
    vu = weighted_neighbor_sum(graph, state.U[t - 1], state.kappa, state.rho,
                               autoreg=spec.autoreg)
    mean = spec.alpha * state.c + vu
    var = spec.alpha * state.c**2 + 2.0 * state.c * vu
    return mean, var


# ---------------------------------------------------------------------------
# joint density


def _check_finite(value, factor):
    if np.isnan(value) or value == np.inf:
        raise NumericError(f"log joint density is non-finite in factor: {factor}")
    return value


def log_joint(state, spec, graph, data):
    """Log of the (unnormalized) joint density of data, latents, and priors.

    Returns -inf for states outside the support (for example rho beyond
    its truncation) and raises NumericError, naming the offending
    factor, if any term evaluates to NaN or +inf.  The (rho, kappa)
    prior is the product of the two gamma kernels on the coupled
    support {0 < rho < 1, 0 < kappa < 1 - rho}.
    """
    T, m = data.T, data.m
    alpha, c = spec.alpha, state.c
    U = state.U
    total = 0.0

    E = data.rate_multiplier(state.beta)
    mu = U * E
    with np.errstate(invalid="ignore"):
        obs = np.sum(sp.xlogy(data.y, mu) - mu - sp.gammaln(data.y + 1.0))
    total += _check_finite(obs, "observation likelihood")

    lead = np.sum(-alpha * np.log(c) - sp.gammaln(alpha) + sp.xlogy(alpha - 1.0, U[0]) - U[0] / c)
    total += _check_finite(lead, "initial frailty density")

    if T > 1:
        if state.Z is None:
            raise SpecError("state carries no latent counts but T > 1")
        row = state.Z.sum(axis=2)
        shape = alpha + row
        trans = np.sum(
            -shape * np.log(c) - sp.gammaln(shape) + sp.xlogy(shape - 1.0, U[1:]) - U[1:] / c
        )
        total += _check_finite(trans, "frailty transition density")

        if spec.autoreg:
            lam0 = state.rho * U[:-1] / c
            z0 = state.Z[:, :, 0]
            self_term = np.sum(sp.xlogy(z0, lam0) - lam0 - sp.gammaln(z0 + 1.0))
            if np.isnan(self_term):
                raise NumericError("log joint density is non-finite in factor: self latent")
            total += self_term

        for i in range(m):
            nbr = graph.neighbors[i]
            if nbr.size == 0:
                continue
            lam = state.kappa * graph.weights[i] * U[:-1][:, nbr] / c
            z = state.Z[:, i, 1 : 1 + nbr.size]
            term = np.sum(sp.xlogy(z, lam) - lam - sp.gammaln(z + 1.0))
            if np.isnan(term):
                raise NumericError("log joint density is non-finite in factor: neighbor latent")
            total += term

    ac, tc = spec.prior_c
    total += _check_finite(
        ac * np.log(tc) - sp.gammaln(ac) - (ac + 1.0) * np.log(c) - tc / c, "scale prior"
    )

    if T > 1:
        if spec.autoreg:
            ar, br = spec.prior_rho
            if not (0 < state.rho < 1):
                return -np.inf
            total += (ar - 1.0) * np.log(state.rho) - br * state.rho \
                + ar * np.log(br) - sp.gammaln(ar)
        if m > 1:
            ak, bk = spec.prior_kappa
            if not (0 < state.kappa < 1 - state.rho):
                return -np.inf
            total += (ak - 1.0) * np.log(state.kappa) - bk * state.kappa \
                + ak * np.log(bk) - sp.gammaln(ak)

    if spec.has_covariates:
        mu0 = np.atleast_1d(np.asarray(spec.beta_prior[0], dtype=float))
        cov0 = np.atleast_2d(np.asarray(spec.beta_prior[1], dtype=float))
        diff = state.beta - mu0
        quad = diff @ np.linalg.solve(cov0, diff)
        _, logdet = np.linalg.slogdet(cov0)
        total += _check_finite(
            -0.5 * (quad + logdet + mu0.size * np.log(2.0 * np.pi)), "coefficient prior"
        )

    if np.isnan(total) or total == np.inf:
        raise NumericError("log joint density is non-finite in factor: total")
    return float(total)
