"""Command-line pipeline: simulate, fit, predict, and diagnose.

Each subcommand reads a JSON config (--config), with --seed and --out
overriding the config's values.  Exit codes: 0 on success, 2 for
configuration problems, 3 for numeric failures, 4 for I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as aio
from .diagnostics import MetricError, fit_summary, summarize_scalar
from .gibbs import run_chain
from .graph import GraphError, build_knn_graph, graph_from_json, graph_to_json
from .model import ModelSpec, NumericError, SpecError
from .predict import PredictionRequest, RequestError, predict
from .rng import DegenerateTruncationError, ParameterError, RandomStream
from .simulate import SimDesign, simulate_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_CONFIG_ERRORS = (
    SpecError,
    GraphError,
    RequestError,
    ParameterError,
    MetricError,
    DegenerateTruncationError,
    KeyError,
    ValueError,
)


class ConfigError(ValueError):
    pass


def _load_config(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err


def _require(cfg, section):
    if section not in cfg:
        raise ConfigError(f"config is missing the {section!r} section")
    return cfg[section]


def _build_spec(cfg):
    model = cfg.get("model", {})
    if "preset" in model:
        return ModelSpec.from_preset(model["preset"], alpha=model.get("alpha", 1.0001))
    payload = {
        "alpha": model.get("alpha", 1.0001),
        "prior_c": model.get("prior_c", [2.0, 10.0]),
        "prior_kappa": model.get("prior_kappa", [0.55, 1.0]),
        "prior_rho": model.get("prior_rho", [0.4, 1.0]),
        "beta_prior": model.get("beta_prior"),
    }
    return aio.spec_from_dict(payload)


def _build_settings(cfg, seed):
    mcmc = dict(cfg.get("mcmc", {}))
    mcmc.setdefault("seed", seed)
    return aio.settings_from_dict(mcmc)


def _resolve_graph(cfg, coords):
    gcfg = cfg.get("graph", {})
    if "path" in gcfg:
        return graph_from_json(gcfg["path"], coords=coords)
    return build_knn_graph(
        coords,
        h_s=gcfg.get("h_s", 12),
        weight_scheme=gcfg.get("weight_scheme", "uniform"),
        variant=gcfg.get("variant", "undirected-self"),
    )


def cmd_simulate(cfg, out, seed):
    sim_cfg = _require(cfg, "simulate")
    design = SimDesign(
        group=sim_cfg.get("group", 1),
        T=sim_cfg.get("T", 100),
        grid=tuple(sim_cfg.get("grid", (11, 11))),
        locations=np.asarray(sim_cfg["locations"], dtype=float)
        if "locations" in sim_cfg else None,
        h_s=sim_cfg.get("h_s", 12),
        kappa=sim_cfg.get("kappa", 0.4),
        rho=sim_cfg.get("rho", 0.4 if sim_cfg.get("group", 1) == 1 else 0.0),
        c=sim_cfg.get("c", 5.0),
        alpha=sim_cfg.get("alpha", 1.0001),
        weight_scheme=sim_cfg.get("weight_scheme", "uniform"),
    )
    result = simulate_dataset(design, RandomStream(seed))
    out.mkdir(parents=True, exist_ok=True)
    aio.write_counts_csv(out / "data.csv", result.data)
    aio.write_locations_csv(out / "locations.csv", result.graph.coords)
    aio.write_json(
        out / "truth.json",
        {
            "group": design.group,
            "variant": design.variant,
            "T": design.T,
            "h_s": design.h_s,
            "kappa": design.kappa,
            "rho": design.rho,
            "c": design.c,
            "alpha": design.alpha,
            "weight_scheme": design.weight_scheme,
            "seed": seed,
        },
    )
    print(f"simulated {design.T} x {result.graph.m} counts into {out}")
    return EXIT_OK


def cmd_fit(cfg, out, seed):
    fit_cfg = _require(cfg, "fit")
    data = aio.read_counts_csv(fit_cfg["data"])
    coords = aio.read_locations_csv(fit_cfg["locations"])
    graph = _resolve_graph(cfg, coords)
    spec = _build_spec(cfg)
    settings = _build_settings(cfg, seed)
    chain = run_chain(spec, graph, data, settings, rng=RandomStream(seed))

    out.mkdir(parents=True, exist_ok=True)
    aio.write_chain(out, chain)
    graph_to_json(graph, out / "graph.json")
    summary = fit_summary(chain, data)
    aio.write_json(out / "fit_summary.json", summary.to_dict())
    print(f"fit stored in {out}: {chain.n_draws} draws")
    print(summary.to_table())
    return EXIT_OK


def cmd_predict(cfg, out, seed):
    pred_cfg = _require(cfg, "predict")
    chain_dir = Path(pred_cfg["chain_dir"])
    chain = aio.read_chain(chain_dir)
    coords = aio.read_locations_csv(pred_cfg["locations"])
    graph = graph_from_json(chain_dir / "graph.json", coords=coords)
    if graph.m != chain.m:
        raise ConfigError(
            f"graph has {graph.m} locations but the chain was fit on {chain.m}"
        )
    new_coords = pred_cfg.get("new_locations")
    if isinstance(new_coords, str):
        new_coords = aio.read_locations_csv(new_coords)
    elif new_coords is not None:
        new_coords = np.asarray(new_coords, dtype=float)
    data = aio.read_counts_csv(pred_cfg["data"]) if "data" in pred_cfg else None
    request = PredictionRequest(
        q=pred_cfg.get("q", 0),
        new_coords=new_coords,
        h_s=pred_cfg.get("h_s", 12),
        weight_scheme=pred_cfg.get("weight_scheme", "uniform"),
        n_draws=pred_cfg.get("n_draws", min(100, chain.n_draws)),
        offset_future=_maybe_array(pred_cfg.get("offset_future")),
        offset_new=_maybe_array(pred_cfg.get("offset_new")),
        x_future=_maybe_array(pred_cfg.get("x_future")),
        x_new=_maybe_array(pred_cfg.get("x_new")),
    )
    draws = predict(chain, graph, request, rng=RandomStream(seed), data=data)
    out.mkdir(parents=True, exist_ok=True)
    aio.write_pred_draws_csv(out / "pred_draws.csv", draws)
    aio.write_pred_summary_csv(out / "pred_summary.csv", draws)
    cells = draws.q * draws.m + (draws.T + draws.q) * draws.r
    print(f"predicted {cells} cells x {request.n_draws} draws into {out}")
    return EXIT_OK


def _maybe_array(value):
    return None if value is None else np.asarray(value, dtype=float)


def cmd_diagnose(cfg, out, seed):
    diag_cfg = _require(cfg, "diagnose")
    fit_dir = Path(diag_cfg["fit_dir"])
    if not fit_dir.exists():
        raise FileNotFoundError(f"fit directory not found: {fit_dir}")
    chain = aio.read_chain(fit_dir)
    data = aio.read_counts_csv(diag_cfg["data"])
    summary = fit_summary(chain, data)

    out.mkdir(parents=True, exist_ok=True)
    aio.write_json(out / "fit_summary.json", summary.to_dict())

    import csv as _csv

    with open(out / "abs_errors.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["t", "location_id", "abs_error"])
        errs = np.abs(data.y - chain.fitted_mean)
        for t in range(chain.T):
            for i in range(chain.m):
                w.writerow([t + 1, i + 1, aio.fmt(errs[t, i])])

    with open(out / "traces.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        p = 0 if chain.beta is None else chain.beta.shape[1]
        w.writerow(["draw", "c", "kappa", "rho"] + [f"beta_{j + 1}" for j in range(p)])
        for s in range(chain.n_draws):
            row = [s + 1, aio.fmt(chain.c[s]), aio.fmt(chain.kappa[s]),
                   aio.fmt(chain.rho[s])]
            row += [aio.fmt(chain.beta[s, j]) for j in range(p)]
            w.writerow(row)

    quartiles = {
        name: summarize_scalar(np.abs(data.y - chain.fitted_mean).ravel())
        for name in ("abs_error",)
    }
    aio.write_json(out / "abs_error_quartiles.json", quartiles)
    print(f"diagnostics written to {out}")
    print(summary.to_table())
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "diagnose": cmd_diagnose,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="argfrailty",
        description="Bayesian spatiotemporal count modeling with gamma frailties",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "draw a synthetic dataset from the generative model"),
        ("fit", "run the Gibbs sampler on a dataset"),
        ("predict", "composition-sample the posterior predictive"),
        ("diagnose", "recompute metrics and plot data from stored artifacts"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="reserved; the pipeline runs single-process")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        out = Path(args.out if args.out is not None else cfg.get("out", "."))
        return _COMMANDS[args.command](cfg, out, seed)
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, *_CONFIG_ERRORS) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
