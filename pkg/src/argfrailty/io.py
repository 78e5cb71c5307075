"""File formats: long-format count CSVs, graph JSON, chain directories.

Every artifact is deterministic for a fixed seed: floats print with 17
significant digits (lossless for doubles), JSON keys are sorted, and
gzip members carry no timestamp, so a rerun is byte-identical.  Time
and location indices are 1-based on disk and 0-based in memory.
"""

from __future__ import annotations

import csv
import gzip
import io as _io
import json
from pathlib import Path

import numpy as np

from .gibbs import McmcSettings, PosteriorChain
from .model import CountDataset, ModelSpec, SpecError


def fmt(x):
    """Shortest decimal form that round-trips a double exactly."""
    return format(float(x), ".17g")


def _open_write(path):
    return open(path, "w", newline="")


# ---------------------------------------------------------------------------
# datasets


def write_counts_csv(path, data):
    """Long-format counts: t, location_id, count[, offset][, x_1..x_p]."""
    T, m = data.T, data.m
    header = ["t", "location_id", "count"]
    if data.offset is not None:
        header.append("offset")
    p = 0 if data.x is None else data.x.shape[2]
    header += [f"x_{j + 1}" for j in range(p)]
    with _open_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(T):
            for i in range(m):
                row = [t + 1, i + 1, int(data.y[t, i])]
                if data.offset is not None:
                    row.append(fmt(data.offset[t, i]))
                row += [fmt(data.x[t, i, j]) for j in range(p)]
                w.writerow(row)


def read_counts_csv(path):
    """Rebuild a CountDataset from its long-format CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[:3] != ["t", "location_id", "count"]:
        raise SpecError(f"unrecognized counts header in {path}")
    has_offset = "offset" in header
    p = sum(1 for name in header if name.startswith("x_"))
    ts = np.array([int(r[0]) for r in rows])
    ids = np.array([int(r[1]) for r in rows])
    T, m = ts.max(), ids.max()
    if len(rows) != T * m:
        raise SpecError(f"expected {T * m} rows ({T} intervals x {m} locations)")
    y = np.zeros((T, m), dtype=np.int64)
    offset = np.zeros((T, m)) if has_offset else None
    x = np.zeros((T, m, p)) if p else None
    off_col = header.index("offset") if has_offset else None
    x_col0 = len(header) - p
    for r in rows:
        t, i = int(r[0]) - 1, int(r[1]) - 1
        y[t, i] = int(r[2])
        if has_offset:
            offset[t, i] = float(r[off_col])
        for j in range(p):
            x[t, i, j] = float(r[x_col0 + j])
    return CountDataset(y=y, offset=offset, x=x)


def write_locations_csv(path, coords):
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    with _open_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"coord_{d + 1}" for d in range(coords.shape[1])])
        for i, row in enumerate(coords):
            w.writerow([i + 1] + [fmt(v) for v in row])


def read_locations_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = sorted((int(r[0]), [float(v) for v in r[1:]]) for r in reader)
    return np.array([coords for _, coords in rows])


def write_json(path, payload):
    with _open_write(path) as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# model spec / settings round-trip


def spec_to_dict(spec):
    out = {
        "alpha": spec.alpha,
        "prior_c": list(spec.prior_c),
        "prior_kappa": list(spec.prior_kappa),
        "prior_rho": None if spec.prior_rho is None else list(spec.prior_rho),
    }
    if spec.beta_prior is not None:
        mean = np.atleast_1d(np.asarray(spec.beta_prior[0], dtype=float))
        cov = np.atleast_2d(np.asarray(spec.beta_prior[1], dtype=float))
        out["beta_prior"] = {"mean": mean.tolist(), "cov": cov.tolist()}
    else:
        out["beta_prior"] = None
    return out


def spec_from_dict(payload):
    beta_prior = None
    if payload.get("beta_prior") is not None:
        beta_prior = (
            np.asarray(payload["beta_prior"]["mean"], dtype=float),
            np.asarray(payload["beta_prior"]["cov"], dtype=float),
        )
    prior_rho = payload.get("prior_rho")
    return ModelSpec(
        alpha=float(payload.get("alpha", 1.0001)),
        prior_c=tuple(payload["prior_c"]),
        prior_kappa=tuple(payload["prior_kappa"]),
        prior_rho=None if prior_rho is None else tuple(prior_rho),
        beta_prior=beta_prior,
    ).validate()


def settings_to_dict(settings):
    return {
        "n_burn": settings.n_burn,
        "n_keep_iterations": settings.n_keep_iterations,
        "thin": settings.thin,
        "metropolis_mix_p": settings.metropolis_mix_p,
        "wide_scale": settings.wide_scale,
        "n_chains": settings.n_chains,
        "seed": settings.seed,
        "store_u": settings.store_u,
    }


def settings_from_dict(payload):
    return McmcSettings(**payload).validate()


# ---------------------------------------------------------------------------
# chain directories


def write_chain(outdir, chain):
    """Persist a chain: scalar draws as gzip CSV, arrays as .npy, meta as JSON."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    w = csv.writer(buf)
    p = 0 if chain.beta is None else chain.beta.shape[1]
    w.writerow(["draw", "c", "kappa", "rho"] + [f"beta_{j + 1}" for j in range(p)])
    for s in range(chain.n_draws):
        row = [s + 1, fmt(chain.c[s]), fmt(chain.kappa[s]), fmt(chain.rho[s])]
        row += [fmt(chain.beta[s, j]) for j in range(p)]
        w.writerow(row)
    with open(outdir / "chain.csv.gz", "wb") as fh:
        with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
            gz.write(buf.getvalue().encode())

    np.save(outdir / "loglik.npy", chain.log_lik)
    if chain.u is not None:
        np.save(outdir / "u_draws.npy", chain.u)

    with _open_write(outdir / "fitted.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "location_id", "fitted"])
        for t in range(chain.T):
            for i in range(chain.m):
                w.writerow([t + 1, i + 1, fmt(chain.fitted_mean[t, i])])

    write_json(
        outdir / "meta.json",
        {
            "spec": spec_to_dict(chain.spec),
            "settings": settings_to_dict(chain.settings) if chain.settings else None,
            "T": chain.T,
            "m": chain.m,
            "n_draws": chain.n_draws,
            "beta_accepted": chain.beta_accepted,
            "n_proposals": chain.n_proposals,
        },
    )


def read_chain(outdir):
    outdir = Path(outdir)
    meta = read_json(outdir / "meta.json")
    spec = spec_from_dict(meta["spec"])
    with gzip.open(outdir / "chain.csv.gz", "rt", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    p = sum(1 for name in header if name.startswith("beta_"))
    n = len(rows)
    c = np.array([float(r[1]) for r in rows])
    kappa = np.array([float(r[2]) for r in rows])
    rho = np.array([float(r[3]) for r in rows])
    beta = np.array([[float(v) for v in r[4 : 4 + p]] for r in rows]) if p else None

    log_lik = np.load(outdir / "loglik.npy")
    u_path = outdir / "u_draws.npy"
    u = np.load(u_path) if u_path.exists() else None

    fitted = np.zeros((meta["T"], meta["m"]))
    with open(outdir / "fitted.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for t, i, val in reader:
            fitted[int(t) - 1, int(i) - 1] = float(val)

    settings = settings_from_dict(meta["settings"]) if meta.get("settings") else None
    return PosteriorChain(
        spec=spec, c=c, kappa=kappa, rho=rho, beta=beta, u=u, log_lik=log_lik,
        fitted_mean=fitted, beta_accepted=meta["beta_accepted"],
        n_proposals=meta["n_proposals"], T=meta["T"], m=meta["m"], settings=settings,
    )


# ---------------------------------------------------------------------------
# predictions


def write_pred_draws_csv(path, draws):
    """Per-draw predictions: draw_id, t, location_id, U, y_pred.

    Future training cells come first; new-location cells follow with ids
    continuing past the training count.
    """
    with _open_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(["draw_id", "t", "location_id", "U", "y_pred"])
        for s in range(draws.draw_ids.size):
            if draws.q:
                for step in range(draws.q):
                    for i in range(draws.m):
                        w.writerow([
                            int(draws.draw_ids[s]) + 1, draws.T + step + 1, i + 1,
                            fmt(draws.u_future[s, step, i]),
                            int(draws.y_future[s, step, i]),
                        ])
            if draws.r:
                for t in range(draws.T + draws.q):
                    for j in range(draws.r):
                        w.writerow([
                            int(draws.draw_ids[s]) + 1, t + 1, draws.m + j + 1,
                            fmt(draws.u_new[s, t, j]),
                            int(draws.y_new[s, t, j]),
                        ])


def write_pred_summary_csv(path, draws, quantiles=(0.05, 0.95)):
    summ = draws.summarize(quantiles=quantiles)
    qkeys = [f"q{int(round(q * 100)):02d}" for q in quantiles]
    with _open_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "location_id", "mean", "median"] + qkeys)
        if "future" in summ:
            block = summ["future"]
            for step in range(draws.q):
                for i in range(draws.m):
                    w.writerow(
                        [draws.T + step + 1, i + 1, fmt(block["mean"][step, i]),
                         fmt(block["median"][step, i])]
                        + [fmt(block[k][step, i]) for k in qkeys]
                    )
        if "new" in summ:
            block = summ["new"]
            for t in range(draws.T + draws.q):
                for j in range(draws.r):
                    w.writerow(
                        [t + 1, draws.m + j + 1, fmt(block["mean"][t, j]),
                         fmt(block["median"][t, j])]
                        + [fmt(block[k][t, j]) for k in qkeys]
                    )
