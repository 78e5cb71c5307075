"""Fully conjugate Gibbs sampler with a Metropolis step for the coefficients.

One sweep updates, in order: the scale c (inverse gamma), every frailty
U[t, i] (gamma, conditionally independent given the latents), the self
weight rho and neighbor weight kappa (truncated gammas), every latent
row Z[t, i, :] (Bessel, sequential within a row because each entry's
order depends on its siblings), and finally beta through a
Hessian-preconditioned random-walk Metropolis move.

All per-cell updates are vectorized across (t, i); the per-sweep cost is
linear in the number of graph edges times T.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import sparse
from scipy import special as sp

from .model import NumericError, SpecError, validate_stationarity
from .rng import (
    RandomStream,
    TruncGammaParams,
    _sample_bessel_many,
    as_generator,
    sample_inverse_gamma,
    sample_truncated_gamma,
)


@dataclass
class McmcSettings:
    """Chain-length and proposal controls.

    ``n_keep_iterations`` post-burn-in sweeps are thinned by ``thin`` to
    ``n_keep_iterations // thin`` stored draws; ``metropolis_mix_p`` is
    the probability of the small-step coefficient proposal, with the
    wide alternative inflating the covariance by ``wide_scale``.
    """

    n_burn: int = 1000
    n_keep_iterations: int = 1000
    thin: int = 1
    metropolis_mix_p: float = 0.95
    wide_scale: float = 100.0
    n_chains: int = 1
    seed: int | None = None
    store_u: bool = True

    def validate(self):
        if self.n_burn < 0 or self.n_keep_iterations < 1:
            raise SpecError("chain lengths must be nonnegative / positive")
        if self.thin < 1 or self.n_keep_iterations % self.thin != 0:
            raise SpecError("thin must divide n_keep_iterations")
        if not 0 < self.metropolis_mix_p < 1:
            raise SpecError("metropolis_mix_p must lie in (0, 1)")
        if self.wide_scale <= 1:
            raise SpecError("wide_scale must exceed 1")
        if self.n_chains < 1:
            raise SpecError("n_chains must be positive")
        return self


@dataclass
class PosteriorChain:
    """Thinned post-burn-in draws plus everything diagnostics need.

    ``log_lik`` holds the per-draw, per-cell Poisson log likelihood
    (draws, T*m); ``fitted_mean`` is the posterior mean of the cell rate
    U * E.  ``u`` is (draws, T, m) in float32 unless storage was
    disabled.
    """

    spec: object
    c: np.ndarray
    kappa: np.ndarray
    rho: np.ndarray
    beta: np.ndarray | None
    u: np.ndarray | None
    log_lik: np.ndarray
    fitted_mean: np.ndarray
    beta_accepted: int
    n_proposals: int
    T: int
    m: int
    settings: McmcSettings = field(repr=False, default=None)

    @property
    def n_draws(self):
        return self.c.shape[0]

    def rate_draws(self, data):
        """Per-draw fitted cell rates U * E as a (draws, T, m) array."""
        if self.u is None:
            raise SpecError("chain was run without frailty storage")
        if self.spec.has_covariates:
            out = np.empty(self.u.shape, dtype=float)
            for s in range(self.n_draws):
                out[s] = self.u[s] * data.rate_multiplier(self.beta[s])
            return out
        return self.u * data.rate_multiplier()[None, :, :]


class _CompiledGraph:
    """Padded-array and sparse views of a NeighborGraph for fast sweeps."""

    def __init__(self, graph):
        self.graph = graph
        m = graph.m
        counts = np.array([graph.neighbor_count(i) for i in range(m)], dtype=np.int64)
        h_max = int(counts.max()) if m else 0
        nbr_idx = np.zeros((m, h_max), dtype=np.int64)
        nbr_w = np.zeros((m, h_max))
        for i in range(m):
            k = counts[i]
            if k:
                nbr_idx[i, :k] = graph.neighbors[i]
                nbr_w[i, :k] = graph.weights[i]
        self.m = m
        self.h_max = h_max
        self.counts = counts
        self.nbr_idx = nbr_idx
        self.nbr_w = nbr_w
        # columns of locations owning each neighbor slot, per slot
        self.slot_locs = [np.flatnonzero(counts >= j) for j in range(1, h_max + 1)]
        self.slot_full = [locs.size == m for locs in self.slot_locs]

        if graph.reverse is None:
            from .graph import build_reverse_adjacency

            build_reverse_adjacency(graph)
        in_l, in_k, in_i = [], [], []
        for i in range(m):
            for l, k in graph.reverse[i]:
                in_l.append(l)
                in_k.append(k)
                in_i.append(i)
        self.in_l = np.asarray(in_l, dtype=np.int64)
        self.in_k = np.asarray(in_k, dtype=np.int64)
        self.in_i = np.asarray(in_i, dtype=np.int64)
        n_edges = self.in_l.size
        self.scatter = sparse.csr_matrix(
            (np.ones(n_edges), (self.in_i, np.arange(n_edges))), shape=(m, n_edges)
        )
        w_in = np.zeros(m)
        if n_edges:
            edge_w = nbr_w[self.in_l, self.in_k]
            np.add.at(w_in, self.in_i, edge_w)
        self.w_in = w_in


_compiled_cache = {}


def compile_graph(graph):
    key = id(graph)
    cached = _compiled_cache.get(key)
    if cached is None or cached.graph is not graph:
        cached = _CompiledGraph(graph)
        _compiled_cache.clear()
        _compiled_cache[key] = cached
    return cached


# ---------------------------------------------------------------------------
# full conditionals (closed-form parameters)


def full_conditional_c(state, spec, graph, data):
    """(shape, scale) of the inverse-gamma full conditional of the scale c.

    shape = alpha_c + T m alpha + 2 * sum(Z); the scale accumulates all
    frailties, rho times the pre-terminal frailties, and the
    kappa-weighted neighbor frailty sums.
    """
    T, m = data.T, data.m
    ac, tc = spec.prior_c
    cg = compile_graph(graph)
    z_total = 0.0 if state.Z is None else float(state.Z.sum())
    shape = ac + T * m * spec.alpha + 2.0 * z_total
    scale = tc + float(state.U.sum())
    if T > 1:
        head = state.U[: T - 1]
        scale += state.rho * float(head.sum())
        if cg.h_max:
            su = head.sum(axis=0)
            scale += state.kappa * float((cg.nbr_w * su[cg.nbr_idx]).sum())
    return shape, scale


def full_conditional_U(state, spec, graph, data, t, i):
    """(shape, rate) of the gamma full conditional of the frailty U[t, i].

    The shape collects the observed count, alpha, the latent row feeding
    this frailty, and every latent this frailty feeds (its own self slot
    plus incoming edges read off the reverse adjacency); the rate adds
    the rate multiplier to (1 + rho + kappa * incoming weight) / c,
    dropping the transition part in the terminal interval.
    """
    T = data.T
    E = data.rate_multiplier(state.beta)
    shape = float(data.y[t, i]) + spec.alpha
    rate = float(E[t, i]) + 1.0 / state.c
    if t >= 1:
        shape += float(state.Z[t - 1, i].sum())
    if t <= T - 2:
        if spec.autoreg:
            shape += float(state.Z[t, i, 0])
        w_in = 0.0
        for l, k in graph.reverse[i]:
            shape += float(state.Z[t, l, k + 1])
            w_in += graph.weights[l][k]
        rate += (state.rho + state.kappa * w_in) / state.c
    return shape, rate


def full_conditional_rho(state, spec, graph, data):
    """Truncated-gamma full conditional of rho on (0, 1)."""
    if not spec.autoreg:
        raise SpecError("rho is not sampled when the self-excitation term is off")
    if data.T < 2:
        raise SpecError("rho is not identified with a single time interval")
    ar, br = spec.prior_rho
    shape = ar + float(state.Z[:, :, 0].sum())
    rate = br + float(state.U[: data.T - 1].sum()) / state.c
    return TruncGammaParams(shape, rate, 0.0, 1.0)


def full_conditional_kappa(state, spec, graph, data):
    """Truncated-gamma full conditional of kappa on (0, 1 - rho)."""
    if data.m < 2 and max(graph.neighbor_count(i) for i in range(graph.m)) == 0:
        raise SpecError("kappa is not identified without neighbor edges")
    if data.T < 2:
        raise SpecError("kappa is not identified with a single time interval")
    ak, bk = spec.prior_kappa
    cg = compile_graph(graph)
    shape = ak + float(state.Z[:, :, 1:].sum())
    su = state.U[: data.T - 1].sum(axis=0)
    rate = bk + float((cg.nbr_w * su[cg.nbr_idx]).sum()) / state.c
    upper = 1.0 - (state.rho if spec.autoreg else 0.0)
    return TruncGammaParams(shape, rate, 0.0, upper)


def bessel_conditional(state, spec, graph, t, i, j):
    """(nu, a) of the Bessel full conditional of latent slot j in row (t, i).

    Slot 0 is the self latent with argument (2/c) sqrt(rho U[t+1,i] U[t,i]);
    slot j >= 1 pairs U[t+1, i] with neighbor j-1's frailty, weighted by
    kappa w_ij.  The order is alpha - 1 plus the sum of the row's other
    entries and always exceeds -1 because alpha > 1.
    """
    row = state.Z[t, i]
    nu = spec.alpha - 1.0 + float(row.sum() - row[j])
    if j == 0:
        coef = state.rho * state.U[t, i]
    else:
        nbr = graph.neighbors[i][j - 1]
        coef = state.kappa * graph.weights[i][j - 1] * state.U[t, nbr]
    a = 2.0 / state.c * np.sqrt(coef * state.U[t + 1, i])
    assert nu > -1.0
    return nu, a


def update_Z_row(state, spec, graph, rng, t, i):
    """Redraw every latent slot of row (t, i) sequentially from its Bessel law.

    Entries must refresh one at a time: each conditional's order uses
    the current values of the other slots in the same row.  A zero
    Bessel argument collapses the draw to zero deterministically.
    """
    gen = as_generator(rng)
    n_slots = graph.neighbor_count(i)
    for j in range(0, n_slots + 1):
        if j == 0 and not spec.autoreg:
            continue
        nu, a = bessel_conditional(state, spec, graph, t, i, j)
        if a == 0.0:
            state.Z[t, i, j] = 0
        else:
            state.Z[t, i, j] = int(
                _sample_bessel_many(np.array([nu]), np.array([a]), gen)[0]
            )
    return state.Z[t, i]


def beta_log_conditional(state, spec, data, beta):
    """Log full conditional of beta up to a constant: prior plus Poisson terms."""
    mu0 = np.atleast_1d(np.asarray(spec.beta_prior[0], dtype=float))
    cov0 = np.atleast_2d(np.asarray(spec.beta_prior[1], dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    diff = beta - mu0
    eta = data.x @ beta
    return float(
        -0.5 * diff @ np.linalg.solve(cov0, diff)
        + np.sum(data.y * eta - state.U * np.exp(eta))
    )


def beta_hessian(state, spec, data, beta):
    """Hessian of the log full conditional of beta (negative definite)."""
    cov0 = np.atleast_2d(np.asarray(spec.beta_prior[1], dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    weights = state.U * np.exp(data.x @ beta)
    return -(np.linalg.inv(cov0) + np.einsum("tm,tmi,tmj->ij", weights, data.x, data.x))


def metropolis_beta(state, spec, data, rng, mix_p=0.95, wide_scale=100.0):
    """One random-walk Metropolis move on beta.

    The proposal covariance is the inverse of the negated log-conditional
    Hessian at the current point (prior precision plus the Poisson
    curvature sum U e^{x'beta} x x'), inflated by ``wide_scale`` with
    probability 1 - ``mix_p``; acceptance is the density ratio clipped
    at one, as for any symmetric random walk.
    """
    gen = as_generator(rng)
    beta = np.atleast_1d(np.asarray(state.beta, dtype=float))
    curvature = -beta_hessian(state, spec, data, beta)
    try:
        chol = np.linalg.cholesky(curvature)
        step = sla.solve_triangular(chol.T, gen.standard_normal(beta.size), lower=False)
    except np.linalg.LinAlgError:
        warnings.warn("proposal Hessian is singular; falling back to the prior diagonal",
                      stacklevel=2)
        cov0 = np.atleast_2d(np.asarray(spec.beta_prior[1], dtype=float))
        step = gen.standard_normal(beta.size) * np.sqrt(np.diag(cov0))
    if gen.random() >= mix_p:
        step = step * np.sqrt(wide_scale)
    proposal = beta + step

    log_accept = beta_log_conditional(state, spec, data, proposal) \
        - beta_log_conditional(state, spec, data, beta)
    accepted = np.log(gen.random()) < log_accept
    return (proposal if accepted else beta), bool(accepted)


# ---------------------------------------------------------------------------
# vectorized sweep


def _u_conditional_arrays(state, spec, cg, data, E):
    """(shape, rate) matrices of every frailty's gamma full conditional."""
    T = data.T
    shape = data.y + spec.alpha
    rate = E + 1.0 / state.c
    if T > 1:
        row = state.Z.sum(axis=2)
        shape[1:] += row
        if spec.autoreg:
            shape[: T - 1] += state.Z[:, :, 0]
        if cg.in_l.size:
            edge_vals = state.Z[:, cg.in_l, cg.in_k + 1]
            shape[: T - 1] += (cg.scatter @ edge_vals.T).T
        rate[: T - 1] += ((state.rho if spec.autoreg else 0.0) + state.kappa * cg.w_in) / state.c
    return shape, rate


def _update_u(state, spec, cg, data, gen, E):
    shape, rate = _u_conditional_arrays(state, spec, cg, data, E)
    state.U = gen.standard_gamma(shape) / rate


def _update_z(state, spec, cg, gen):
    T = state.U.shape[0]
    u_next = state.U[1:]
    u_prev = state.U[: T - 1]
    two_over_c = 2.0 / state.c
    row = state.Z.sum(axis=2)
    if spec.autoreg:
        a = two_over_c * np.sqrt(state.rho * u_next * u_prev)
        nu = spec.alpha - 1.0 + (row - state.Z[:, :, 0])
        new = _sample_bessel_many(nu.ravel(), a.ravel(), gen).reshape(a.shape)
        row += new - state.Z[:, :, 0]
        state.Z[:, :, 0] = new
    for j in range(1, cg.h_max + 1):
        locs = cg.slot_locs[j - 1]
        if locs.size == 0:
            continue
        if cg.slot_full[j - 1]:
            src = cg.nbr_idx[:, j - 1]
            coef = state.kappa * cg.nbr_w[:, j - 1]
            a = two_over_c * np.sqrt(coef * u_next * u_prev[:, src])
            nu = spec.alpha - 1.0 + (row - state.Z[:, :, j])
            new = _sample_bessel_many(nu.ravel(), a.ravel(), gen).reshape(a.shape)
            row += new - state.Z[:, :, j]
            state.Z[:, :, j] = new
        else:
            src = cg.nbr_idx[locs, j - 1]
            coef = state.kappa * cg.nbr_w[locs, j - 1]
            a = two_over_c * np.sqrt(coef * u_next[:, locs] * u_prev[:, src])
            nu = spec.alpha - 1.0 + (row[:, locs] - state.Z[:, locs, j])
            new = _sample_bessel_many(nu.ravel(), a.ravel(), gen).reshape(a.shape)
            row[:, locs] += new - state.Z[:, locs, j]
            state.Z[:, locs, j] = new


def gibbs_sweep(state, spec, graph, data, rng, mix_p=0.95, wide_scale=100.0):
    """One full Gibbs iteration; mutates and returns the state.

    Order: c, all U, rho (when the self term is on), kappa (when edges
    exist), all Z rows, then beta (when covariates are present).
    Updates skipped by the degenerate branches (T = 1, m = 1) leave
    their variables untouched.
    """
    gen = as_generator(rng)
    cg = compile_graph(graph)
    T = data.T

    shape_c, scale_c = full_conditional_c(state, spec, graph, data)
    state.c = float(sample_inverse_gamma(shape_c, scale_c, gen))

    E = data.rate_multiplier(state.beta)
    _update_u(state, spec, cg, data, gen, E)

    if T > 1:
        if spec.autoreg:
            p = full_conditional_rho(state, spec, graph, data)
            state.rho = float(sample_truncated_gamma(p.shape, p.rate, p.lo, p.hi, gen))
        if cg.h_max > 0:
            p = full_conditional_kappa(state, spec, graph, data)
            state.kappa = float(sample_truncated_gamma(p.shape, p.rate, p.lo, p.hi, gen))
        _update_z(state, spec, cg, gen)

    accepted = None
    if spec.has_covariates:
        state.beta, accepted = metropolis_beta(
            state, spec, data, gen, mix_p=mix_p, wide_scale=wide_scale
        )
    return state, accepted


# ---------------------------------------------------------------------------
# chain driver


def initial_state(spec, graph, data):
    """Deterministic starting point in the bulk of the prior.

    c starts at its prior mean, (rho, kappa) at prior means jointly
    rescaled under 0.9, frailties at max(y, 0.5) over the rate
    multiplier, latents at zero, and beta at its prior mean.
    """
    ac, tc = spec.prior_c
    c0 = tc / (ac - 1.0) if ac > 1 else tc
    kappa0 = spec.prior_kappa[0] / spec.prior_kappa[1]
    rho0 = spec.prior_rho[0] / spec.prior_rho[1] if spec.autoreg else 0.0
    total = rho0 + kappa0
    if total > 0.9:
        rho0, kappa0 = 0.9 * rho0 / total, 0.9 * kappa0 / total
    beta0 = None
    if spec.has_covariates:
        beta0 = np.atleast_1d(np.asarray(spec.beta_prior[0], dtype=float)).copy()
    E0 = data.rate_multiplier(beta0)
    U0 = np.maximum(data.y, 0.5) / E0
    cg = compile_graph(graph)
    Z0 = None
    if data.T > 1:
        Z0 = np.zeros((data.T - 1, data.m, 1 + cg.h_max), dtype=np.int64)
    from .model import ChainState

    return ChainState(c=float(c0), kappa=float(kappa0), rho=float(rho0),
                      U=U0, Z=Z0, beta=beta0)


def _check_state_finite(state, iteration):
    if not np.isfinite(state.c):
        raise NumericError(f"non-finite c at iteration {iteration}")
    if not np.all(np.isfinite(state.U)):
        raise NumericError(f"non-finite frailty at iteration {iteration}")
    if state.beta is not None and not np.all(np.isfinite(state.beta)):
        raise NumericError(f"non-finite beta at iteration {iteration}")


def run_chain(spec, graph, data, settings, rng=None):
    """Burn in, then record thinned draws and per-cell log likelihoods.

    Stationarity of the initial (rho, kappa) is validated up front; the
    run aborts with the iteration index if any state goes non-finite.
    Reproducible: the same seed yields a bitwise identical chain.
    """
    spec.validate()
    settings.validate()
    if graph.m != data.m:
        raise SpecError(f"graph has {graph.m} locations but data has {data.m}")
    if spec.has_covariates and data.x is None:
        raise SpecError("spec expects covariates but the dataset has none")
    if not spec.has_covariates and data.x is not None:
        raise SpecError("dataset carries covariates but the spec has no beta prior")
    rng = rng if rng is not None else RandomStream(settings.seed)
    gen = as_generator(rng)

    state = initial_state(spec, graph, data)
    if data.T > 1:
        check = validate_stationarity(graph, state.rho, state.kappa)
        if not check:
            raise SpecError(f"initial state is not stationary: {check.reason}")

    T, m = data.T, data.m
    n_store = settings.n_keep_iterations // settings.thin
    p = spec.p
    store = {
        "c": np.empty(n_store),
        "kappa": np.empty(n_store),
        "rho": np.empty(n_store),
        "beta": np.empty((n_store, p)) if p else None,
        "u": np.empty((n_store, T, m), dtype=np.float32) if settings.store_u else None,
        "log_lik": np.empty((n_store, T * m), dtype=np.float32),
    }
    fitted_sum = np.zeros((T, m))
    lgy = sp.gammaln(data.y + 1.0)
    accepted = 0
    proposals = 0

    kept = 0
    total_iters = settings.n_burn + settings.n_keep_iterations
    for it in range(total_iters):
        _, acc = gibbs_sweep(state, spec, graph, data, gen,
                             mix_p=settings.metropolis_mix_p,
                             wide_scale=settings.wide_scale)
        if acc is not None:
            proposals += 1
            accepted += int(acc)
        _check_state_finite(state, it)
        post = it - settings.n_burn
        if post < 0 or (post + 1) % settings.thin != 0:
            continue
        mu = state.U * data.rate_multiplier(state.beta)
        fitted_sum += mu
        store["c"][kept] = state.c
        store["kappa"][kept] = state.kappa
        store["rho"][kept] = state.rho
        if p:
            store["beta"][kept] = state.beta
        if settings.store_u:
            store["u"][kept] = state.U
        store["log_lik"][kept] = (sp.xlogy(data.y, mu) - mu - lgy).ravel()
        kept += 1

    return PosteriorChain(
        spec=spec,
        c=store["c"],
        kappa=store["kappa"],
        rho=store["rho"],
        beta=store["beta"],
        u=store["u"],
        log_lik=store["log_lik"],
        fitted_mean=fitted_sum / max(kept, 1),
        beta_accepted=accepted,
        n_proposals=proposals,
        T=T,
        m=m,
        settings=settings,
    )


def run_chains(spec, graph, data, settings, rng=None):
    """Run ``settings.n_chains`` independent chains on forked substreams."""
    rng = rng if rng is not None else RandomStream(settings.seed)
    if not isinstance(rng, RandomStream):
        raise SpecError("multi-chain runs need a forkable RandomStream")
    streams = rng.fork(settings.n_chains)
    return [run_chain(spec, graph, data, settings, rng=s) for s in streams]
