"""Posterior predictive draws by composition sampling.

For each retained posterior draw, the pipeline (i) rolls the training
frailties forward through the noncentral-gamma transition for q future
intervals, (ii) simulates fresh frailty paths at new locations whose
latent Poisson rates blend the k nearest training frailties with the
location's own past, and (iii) emits Poisson counts for every predicted
cell.  New locations are mutually independent given the training paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .graph import knn_for_new_location
from .rng import RandomStream, as_generator


class RequestError(ValueError):
    """The prediction request is inconsistent with the chain or model."""


@dataclass
class PredictionRequest:
    """What to predict and with how many posterior draws.

    ``q`` future intervals at the training locations and full paths at
    ``new_coords`` (r locations); at least one of the two must be
    requested.  When the training model used offsets, per-cell offsets
    for every predicted cell are mandatory.
    """

    q: int = 0
    new_coords: np.ndarray | None = None
    h_s: int = 12
    weight_scheme: str = "uniform"
    n_draws: int = 100
    offset_future: np.ndarray | None = None  # (q, m)
    offset_new: np.ndarray | None = None  # (T + q, r)
    x_future: np.ndarray | None = None  # (q, m, p)
    x_new: np.ndarray | None = None  # (T + q, r, p)

    @property
    def r(self):
        return 0 if self.new_coords is None else np.atleast_2d(self.new_coords).shape[0]

    def validate(self):
        if self.q < 0:
            raise RequestError("q must be nonnegative")
        if self.q + self.r < 1:
            raise RequestError("request at least one future interval or new location")
        if self.n_draws < 1:
            raise RequestError("n_draws must be positive")
        return self


@dataclass
class PredictiveDraws:
    """Per-draw frailties and counts for every predicted cell.

    ``u_future``/``y_future`` are (n_draws, q, m); ``u_new``/``y_new``
    are (n_draws, T + q, r).  Location ids for the new columns continue
    after the training ids.
    """

    draw_ids: np.ndarray
    T: int
    m: int
    q: int
    r: int
    u_future: np.ndarray | None = field(default=None, repr=False)
    y_future: np.ndarray | None = field(default=None, repr=False)
    u_new: np.ndarray | None = field(default=None, repr=False)
    y_new: np.ndarray | None = field(default=None, repr=False)

    def summarize(self, quantiles=(0.05, 0.95)):
        """Per-cell mean/median/quantile summaries of the predicted counts.

        Returns a dict of arrays keyed by cell block ("future", "new").
        """
        out = {}
        for key, draws in (("future", self.y_future), ("new", self.y_new)):
            if draws is None or draws.size == 0:
                continue
            block = {
                "mean": draws.mean(axis=0),
                "median": np.median(draws, axis=0),
            }
            for qtl in quantiles:
                block[f"q{int(round(qtl * 100)):02d}"] = np.quantile(draws, qtl, axis=0)
            out[key] = block
        return out


def _neighbor_operator(graph):
    """Sparse (m, m) matrix with row i holding weights on N(i)."""
    rows, cols, vals = [], [], []
    for i in range(graph.m):
        for k, j in enumerate(graph.neighbors[i]):
            rows.append(i)
            cols.append(int(j))
            vals.append(graph.weights[i][k])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(graph.m, graph.m))


def forward_frailty_training(draw, graph, q, rng, n_rep=None):
    """Roll one posterior draw's terminal frailties forward q intervals.

    ``draw`` is a mapping with keys c, kappa, rho, u_last (the terminal
    frailty slice); pass ``n_rep`` to produce that many independent
    forward paths at once (stacked on the first axis).
    """
    gen = as_generator(rng)
    W = _neighbor_operator(graph)
    u_prev = np.atleast_2d(np.asarray(draw["u_last"], dtype=float))
    if n_rep is not None:
        u_prev = np.broadcast_to(u_prev[0], (n_rep, u_prev.shape[1])).copy()
    reps, m = u_prev.shape
    c, kappa, rho = draw["c"], draw["kappa"], draw["rho"]
    alpha = draw["alpha"]
    out = np.empty((reps, q, m))
    for step in range(q):
        lam = (kappa * (u_prev @ W.T) + rho * u_prev) / c
        z = gen.poisson(lam)
        u_prev = gen.standard_gamma(alpha + z) * c
        out[:, step, :] = u_prev
    return out[0] if n_rep is None and reps == 1 else out


def frailty_new_locations(draw, u_train_path, nbr_idx, nbr_w, horizon, rng):
    """Simulate frailty paths at new locations over intervals 0..horizon-1.

    ``u_train_path`` is the (>= horizon - 1, m) training-frailty matrix
    the latent rates condition on; ``nbr_idx``/``nbr_w`` are (r, k)
    neighbor indices and weights.  The first interval is
    Gamma(alpha, rate 1/c); later intervals blend neighbors at the
    previous interval with the location's own previous value.
    """
    gen = as_generator(rng)
    c, kappa, rho, alpha = draw["c"], draw["kappa"], draw["rho"], draw["alpha"]
    r = nbr_idx.shape[0]
    out = np.empty((horizon, r))
    out[0] = gen.standard_gamma(alpha, size=r) * c
    for t in range(1, horizon):
        neighbor_part = (nbr_w * u_train_path[t - 1][nbr_idx]).sum(axis=1)
        lam = (kappa * neighbor_part + rho * out[t - 1]) / c
        z = gen.poisson(lam)
        out[t] = gen.standard_gamma(alpha + z) * c
    return out


def _cell_name(block, t, j):
    return f"{block} cell (t={t + 1}, location={j + 1})"


def _resolve_multiplier(chain, request, data_offset_used, block, shape, offset, x, beta=None):
    """Offset or covariate multiplier for a predicted block, validated per cell."""
    if chain.spec.has_covariates:
        if x is None:
            raise RequestError(f"missing covariates for every {_cell_name(block, 0, 0)}")
        x = np.asarray(x, dtype=float)
        if x.shape[:2] != shape:
            raise RequestError(f"covariate block {block} must have shape {shape} + (p,)")
        return np.exp(x @ beta)
    if data_offset_used:
        if offset is None:
            raise RequestError(f"missing offset for every {_cell_name(block, 0, 0)}")
        offset = np.asarray(offset, dtype=float)
        if offset.shape != shape:
            raise RequestError(f"offset block {block} must have shape {shape}")
        bad = np.argwhere(~(offset > 0))
        if bad.size:
            t, j = bad[0]
            raise RequestError(f"nonpositive offset at {_cell_name(block, t, j)}")
        return offset
    return np.ones(shape)


def predict(chain, graph, request, rng=None, data=None):
    """Composition-sample the posterior predictive for a request.

    Uses ``request.n_draws`` posterior draws taken evenly across the
    chain; each contributes one forward simulation of future training
    frailties, new-location paths, and Poisson counts.  ``data`` is only
    needed to recover offsets when the training fit used them.
    """
    request.validate()
    if chain.m != graph.m:
        raise RequestError(f"chain has {chain.m} locations but graph has {graph.m}")
    if chain.u is None:
        raise RequestError("chain was stored without frailty draws; refit with store_u")
    if request.n_draws > chain.n_draws:
        raise RequestError("n_draws exceeds the chain length")
    rng = rng if rng is not None else RandomStream(0)
    gen = as_generator(rng)

    T, m, q, r = chain.T, chain.m, request.q, request.r
    data_offset_used = data is not None and data.offset is not None
    # evenly spaced, guaranteed-distinct draw indices
    sel = np.floor(np.arange(request.n_draws) * chain.n_draws / request.n_draws).astype(int)
    n = sel.size
    alpha = chain.spec.alpha
    W = _neighbor_operator(graph)

    if r:
        coords = np.atleast_2d(np.asarray(request.new_coords, dtype=float))
        pairs = [
            knn_for_new_location(xy, graph, request.h_s, weight_scheme=request.weight_scheme)
            for xy in coords
        ]
        k = max(len(p[0]) for p in pairs)
        nbr_idx = np.vstack([p[0] for p in pairs])
        nbr_w = np.vstack([p[1] for p in pairs])
        assert nbr_idx.shape == (r, k)

    u_future = np.empty((n, q, m)) if q else None
    u_new = np.empty((n, T + q, r)) if r else None

    for s, draw_id in enumerate(sel):
        c = float(chain.c[draw_id])
        kappa = float(chain.kappa[draw_id])
        rho = float(chain.rho[draw_id])
        u_path = chain.u[draw_id].astype(float)
        if q:
            u_prev = u_path[-1]
            fwd = np.empty((q, m))
            for step in range(q):
                lam = (kappa * (W @ u_prev) + rho * u_prev) / c
                z = gen.poisson(lam)
                u_prev = gen.standard_gamma(alpha + z) * c
                fwd[step] = u_prev
            u_future[s] = fwd
            u_path = np.vstack([u_path, fwd])
        if r:
            draw = {"c": c, "kappa": kappa, "rho": rho, "alpha": alpha}
            u_new[s] = frailty_new_locations(draw, u_path, nbr_idx, nbr_w, T + q, gen)

    y_future = y_new = None
    if q:
        beta_sel = chain.beta[sel] if chain.spec.has_covariates else None
        if chain.spec.has_covariates:
            mult = np.stack(
                [
                    _resolve_multiplier(chain, request, data_offset_used, "future",
                                        (q, m), request.offset_future, request.x_future,
                                        beta_sel[s])
                    for s in range(n)
                ]
            )
        else:
            mult = _resolve_multiplier(chain, request, data_offset_used, "future",
                                       (q, m), request.offset_future, request.x_future)
        y_future = gen.poisson(u_future * mult)
    if r:
        beta_sel = chain.beta[sel] if chain.spec.has_covariates else None
        if chain.spec.has_covariates:
            mult = np.stack(
                [
                    _resolve_multiplier(chain, request, data_offset_used, "new",
                                        (T + q, r), request.offset_new, request.x_new,
                                        beta_sel[s])
                    for s in range(n)
                ]
            )
        else:
            mult = _resolve_multiplier(chain, request, data_offset_used, "new",
                                       (T + q, r), request.offset_new, request.x_new)
        y_new = gen.poisson(u_new * mult)

    return PredictiveDraws(
        draw_ids=sel, T=T, m=m, q=q, r=r,
        u_future=u_future, y_future=y_future, u_new=u_new, y_new=y_new,
    )
