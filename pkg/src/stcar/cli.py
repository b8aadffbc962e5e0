"""Command-line front end: simulate, filter, fit, compare, prior.

Single runs are flag-driven; sweeps read a JSON configuration file whose
keys the flags override.  Every run writes a ``manifest.json`` (config
echo, versions, seed, wall time) sufficient to reproduce it.  Exit codes:
0 success, 1 usage error, 2 data validation error, 3 numerical failure.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import __version__
from .confounding import FilterSpec, apply_filter
from .data import DataValidationError, load_dataset, save_dataset
from .factor import FactorError
from .fields import FieldError
from .graphs import GraphError, spectrum
from .inference import GridConfig, InferenceError, fit as run_fit_engine, make_spec, waic
from .priors import PriorError, UniformPrior, calibrate
from .simulate import SimConfig, SimulationError, simulate
from .structures import StructureError

USAGE_EXIT, DATA_EXIT, NUMERIC_EXIT = 1, 2, 3

DEFAULT_PRIORS = {
    "sigma": {"type": "pc", "u": float(np.sqrt(0.5)), "alpha": 0.9},
    "r": {"type": "pc", "u": 0.4, "alpha": 0.8},
    "xi": {"type": "pc", "u": 0.5, "alpha": 2.0 / 3.0},
}
COMPARE_PRIORS = (
    ("Unif", ("uniform",)),
    ("PC1", ("pc", 0.5, 2.0 / 3.0)),
    ("PC2", ("pc", 0.6, 0.9)),
)


def _load_config(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_manifest(out_dir, command, config, seed, t0):
    import scipy

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "seed": seed,
        "versions": {
            "stcar": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _xi_prior_tuple(prior_cfg):
    if prior_cfg["type"] == "uniform":
        return ("uniform",)
    return ("pc", float(prior_cfg["u"]), float(prior_cfg["alpha"]))


def _spec_from_config(kind, graph, T, cfg):
    priors = {**DEFAULT_PRIORS, **cfg.get("priors", {})}
    model = cfg.get("model", {})
    return make_spec(
        kind,
        graph,
        T,
        sigma_pc=(float(priors["sigma"]["u"]), float(priors["sigma"]["alpha"])),
        r_pc=(float(priors["r"]["u"]), float(priors["r"]["alpha"])),
        xi_prior=_xi_prior_tuple(priors["xi"]),
        covariates=model.get("covariates"),
        per_year_intercepts=model.get("per_year_intercepts", True),
        beta_prior_variance=model.get("fixed_effect_prior_variance", 1e3),
    )


def _grid_from_config(cfg):
    g = cfg.get("grid", {})
    return GridConfig(
        points_per_axis=int(g.get("points_per_axis", 7)),
        span_sd=float(g.get("span_sd", 3.0)),
    )


def _load_data_from_config(cfg):
    data = cfg.get("data", {})
    if "counts" not in data or "adjacency" not in data:
        raise click.UsageError("config must provide data.counts and data.adjacency")
    return load_dataset(data["counts"], data["adjacency"], data.get("area_covariates"))


def _maybe_filter(ds, cfg):
    fcfg = cfg.get("filter")
    if not fcfg or not fcfg.get("covariates"):
        return ds
    fspec = FilterSpec(tuple(fcfg["covariates"]), int(fcfg["k"]))
    return apply_filter(ds, fspec, spectrum(ds.graph))


@click.group()
@click.version_option(version=__version__, prog_name="stcar")
def cli():
    """Spatio-temporal areal count models: simulate, filter, fit, compare."""


@cli.command("prior")
@click.option("--target", type=click.Choice(["sigma", "r", "rho", "lambda", "phi"]), required=True)
@click.option("--u", type=float, required=True, help="Tail boundary value.")
@click.option("--alpha", type=float, required=True, help="Tail probability.")
@click.option("--n", type=int, default=100, show_default=True, help="Areas (target r).")
@click.option("--t", "t_years", type=int, default=4, show_default=True, help="Years.")
@click.option("--adjacency", type=click.Path(exists=True), default=None,
              help="Graph file (targets rho/lambda/phi).")
@click.option("--grid-points", type=int, default=201, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="CSV output path.")
def prior_cmd(target, u, alpha, n, t_years, adjacency, grid_points, out):
    """Calibrate a PC prior and tabulate (theta, density, KLD, distance)."""
    kwargs = {}
    if target == "r":
        kwargs = {"n": n, "T": t_years}
    elif target in ("rho", "lambda", "phi"):
        if adjacency is None:
            raise click.UsageError(f"target {target} requires --adjacency")
        from .data import _load_graph

        kwargs = {"spectrum": spectrum(_load_graph(adjacency, None)), "T": t_years}
    p = calibrate(target, u, alpha, **kwargs)
    click.echo(f"psi = {p.psi:.6g}")
    if target == "sigma":
        click.echo(f"prior_mean = {1.0 / p.psi:.6g}")
    if out is not None:
        if target == "sigma":
            thetas = np.linspace(1e-6, 5.0 / p.psi, grid_points)
        elif target == "r":
            thetas = np.linspace(-1 + 1e-6, 1 - 1e-6, grid_points)
        else:
            thetas = np.linspace(1e-6, 1 - 1e-6, grid_points)
        rows = []
        for th in thetas:
            clamped = th != p._clamp(th) if target != "sigma" else False
            if target == "sigma":
                kld = dist = float("nan")
            else:
                tc = p._clamp(th)
                kld, dist = p.kld(tc), p.distance(tc)
            rows.append([th, p.density(th), kld, dist, int(bool(clamped))])
        pd.DataFrame(rows, columns=["theta", "density", "kld", "distance", "clamped"]).to_csv(
            out, index=False, float_format="%.10g"
        )
        click.echo(f"wrote {out}")


@cli.command("simulate")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("--kind", type=click.Choice(["ICAR", "PCAR", "LCAR", "BYM"]), default="LCAR",
              show_default=True)
@click.option("--lattice-side", type=int, default=10, show_default=True)
@click.option("--t", "t_years", type=int, default=4, show_default=True)
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--r", type=float, default=0.6, show_default=True)
@click.option("--xi", type=float, default=0.7, show_default=True)
@click.option("--beta", type=str, default="0.3,-0.2", show_default=True,
              help="Comma-separated true covariate effects.")
@click.option("--intercept", type=float, default=-7.0, show_default=True)
@click.option("--covariate-mode", type=click.Choice(["random", "confounded"]),
              default="random", show_default=True)
@click.option("--trend-scale", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def simulate_cmd(out, kind, lattice_side, t_years, sigma, r, xi, beta, intercept,
                 covariate_mode, trend_scale, seed):
    """Draw a synthetic dataset and write CSVs plus a ground-truth sidecar."""
    t0 = time.perf_counter()
    beta_vals = tuple(float(v) for v in beta.split(",")) if beta else ()
    cfg = SimConfig(
        kind=kind,
        lattice_side=lattice_side,
        T=t_years,
        sigma=sigma,
        r=r,
        xi=None if kind == "ICAR" else xi,
        beta=beta_vals,
        intercepts=intercept,
        covariate_mode=covariate_mode,
        trend_scale=trend_scale,
        seed=seed,
    )
    ds = simulate(cfg)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out_dir / "counts.csv")
    with open(out_dir / "adjacency.txt", "w", encoding="utf-8") as fh:
        fh.write("# edge list, 0-based node indices\n")
        for i, j in ds.graph.edges:
            fh.write(f"{i} {j}\n")
    with open(out_dir / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(ds.truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "simulate", cfg.__dict__ | {"beta": list(beta_vals)}, seed, t0)
    click.echo(f"wrote {out_dir}/counts.csv ({ds.n} areas x {ds.T} years)")


@cli.command("filter")
@click.option("--counts", type=click.Path(exists=True), required=True)
@click.option("--adjacency", type=click.Path(exists=True), required=True)
@click.option("--area-covariates", type=click.Path(exists=True), default=None)
@click.option("--covariates", type=str, required=True, help="Comma-separated names to filter.")
@click.option("--k", type=int, required=True, help="Eigenvectors removed.")
@click.option("--out", type=click.Path(), required=True, help="Filtered design CSV.")
def filter_cmd(counts, adjacency, area_covariates, covariates, k, out):
    """Filter low-frequency spatial trends out of covariates; write the design."""
    ds, graph = load_dataset(counts, adjacency, area_covariates)
    fspec = FilterSpec(tuple(covariates.split(",")), k)
    filtered = apply_filter(ds, fspec, spectrum(graph))
    rows = []
    for t, year in enumerate(filtered.years):
        for i, area in enumerate(filtered.area_ids):
            rows.append([area, year] + [filtered.X[t, i, j] for j in range(filtered.p)])
    pd.DataFrame(rows, columns=["area_id", "year"] + filtered.covariate_names).to_csv(
        out, index=False, float_format="%.10g"
    )
    click.echo(f"wrote {out}")


@cli.command("fit")
@click.option("--config", type=click.Path(exists=True), default=None, help="JSON config.")
@click.option("--counts", type=click.Path(exists=True), default=None)
@click.option("--adjacency", type=click.Path(exists=True), default=None)
@click.option("--area-covariates", type=click.Path(exists=True), default=None)
@click.option("--kind", type=click.Choice(["ICAR", "PCAR", "LCAR", "BYM"]), default=None)
@click.option("--filter-covariates", type=str, default=None,
              help="Comma-separated covariates for the confounding filter.")
@click.option("--k", type=int, default=None, help="Eigenvectors removed by the filter.")
@click.option("--grid-points", type=int, default=None)
@click.option("--waic-draws", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
def fit_cmd(config, counts, adjacency, area_covariates, kind, filter_covariates, k,
            grid_points, waic_draws, seed, out):
    """Fit one model; write effect/hyperparameter summaries and a WAIC report."""
    t0 = time.perf_counter()
    cfg = _load_config(config)
    # flags win over the config file
    data = cfg.setdefault("data", {})
    if counts:
        data["counts"] = counts
    if adjacency:
        data["adjacency"] = adjacency
    if area_covariates:
        data["area_covariates"] = area_covariates
    if kind:
        cfg.setdefault("model", {})["kind"] = kind
    if filter_covariates is not None:
        cfg["filter"] = {"covariates": filter_covariates.split(","),
                         "k": k if k is not None else cfg.get("filter", {}).get("k", 20)}
    elif k is not None and cfg.get("filter"):
        cfg["filter"]["k"] = k
    if grid_points is not None:
        cfg.setdefault("grid", {})["points_per_axis"] = grid_points
    if waic_draws is not None:
        cfg.setdefault("waic", {})["draws"] = waic_draws
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["output"] = out

    out_dir = cfg.get("output")
    if out_dir is None:
        raise click.UsageError("an output directory is required (--out or config.output)")
    model_kind = cfg.get("model", {}).get("kind")
    if model_kind is None:
        raise click.UsageError("a model kind is required (--kind or config.model.kind)")
    run_seed = int(cfg.get("seed", 0))

    ds, graph = _load_data_from_config(cfg)
    ds = _maybe_filter(ds, cfg)
    spec = _spec_from_config(model_kind, graph, ds.T, cfg)
    result = run_fit_engine(ds, spec, _grid_from_config(cfg))
    report = waic(ds, result, S=int(cfg.get("waic", {}).get("draws", 1000)), seed=run_seed)

    from .data import export_results

    export_results(result, out_dir, waic_report=report)
    _write_manifest(out_dir, "fit", cfg, run_seed, t0)
    for flag in result.flags:
        click.echo(f"note: {flag}", err=True)
    click.echo(f"WAIC = {report.waic:.2f} (P. eff = {report.p_eff:.2f}); wrote {out_dir}")


def _compare_cell(args):
    """One (model row) x (filter variant) fit; returns (waic, p_eff) or error."""
    ds, kind, xi_prior, grid_cfg, waic_draws, cell_seed = args
    try:
        spec = make_spec(kind, ds.graph, ds.T, xi_prior=xi_prior)
        result = run_fit_engine(ds, spec, grid_cfg)
        report = waic(ds, result, S=waic_draws, seed=cell_seed)
        return report.waic, report.p_eff, None
    except Exception as exc:  # row-level containment: the sweep must finish
        return float("nan"), float("nan"), f"{type(exc).__name__}: {exc}"


@cli.command("compare")
@click.option("--config", type=click.Path(exists=True), default=None, help="JSON config.")
@click.option("--counts", type=click.Path(exists=True), default=None)
@click.option("--adjacency", type=click.Path(exists=True), default=None)
@click.option("--filter-covariates", type=str, default=None)
@click.option("--grid-points", type=int, default=None)
@click.option("--n-jobs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
def compare_cmd(config, counts, adjacency, filter_covariates, grid_points, n_jobs, seed, out):
    """Sweep the four structures x prior settings x filter variants; write WAIC table."""
    t0 = time.perf_counter()
    cfg = _load_config(config)
    data = cfg.setdefault("data", {})
    if counts:
        data["counts"] = counts
    if adjacency:
        data["adjacency"] = adjacency
    comp = cfg.setdefault("compare", {})
    if filter_covariates is not None:
        comp["filter_covariates"] = filter_covariates.split(",")
    if n_jobs is not None:
        comp["n_jobs"] = n_jobs
    if grid_points is not None:
        cfg.setdefault("grid", {})["points_per_axis"] = grid_points
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["output"] = out
    out_dir = cfg.get("output")
    if out_dir is None:
        raise click.UsageError("an output directory is required (--out or config.output)")
    run_seed = int(cfg.get("seed", 0))
    ks = [int(v) for v in comp.get("ks", (15, 20, 25))]
    waic_draws = int(cfg.get("waic", {}).get("draws", 1000))
    grid_cfg = _grid_from_config(cfg)

    ds, graph = _load_data_from_config(cfg)
    filter_covs = comp.get("filter_covariates") or []
    variants = [("base", ds)]
    for kk in ks:
        if filter_covs:
            variants.append(
                (f"s{kk}", apply_filter(ds, FilterSpec(tuple(filter_covs), kk), spectrum(graph)))
            )
        else:
            variants.append((f"s{kk}", None))

    rows = [("ICAR", "", None)]
    for kind in ("PCAR", "LCAR", "BYM"):
        for label, xp in COMPARE_PRIORS:
            rows.append((kind, label, xp))

    tasks, index = [], []
    for ri, (kind, plabel, xp) in enumerate(rows):
        for ci, (vlabel, vds) in enumerate(variants):
            if vds is None:
                continue
            cell_seed = run_seed + 1000 * ri + ci
            tasks.append((vds, kind, xp if xp is not None else ("uniform",), grid_cfg,
                          waic_draws, cell_seed))
            index.append((ri, ci))

    jobs = int(comp.get("n_jobs", 1))
    if jobs != 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs)(delayed(_compare_cell)(t) for t in tasks)
    else:
        results = [_compare_cell(t) for t in tasks]

    table = {}
    errors = []
    for (ri, ci), (w, p, err) in zip(index, results):
        table[(ri, ci)] = (w, p)
        if err:
            errors.append(f"row {rows[ri][0]}/{rows[ri][1] or '-'} variant "
                          f"{variants[ci][0]}: {err}")

    out_rows = []
    for ri, (kind, plabel, _) in enumerate(rows):
        row = {"model": kind, "prior": plabel}
        for ci, (vlabel, vds) in enumerate(variants):
            w, p = table.get((ri, ci), (float("nan"), float("nan")))
            row[f"waic_{vlabel}"] = w
            row[f"peff_{vlabel}"] = p
        out_rows.append(row)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(out_rows).to_csv(out_path / "comparison.csv", index=False,
                                  float_format="%.10g")
    if errors:
        with open(out_path / "errors.log", "w", encoding="utf-8") as fh:
            fh.write("\n".join(errors) + "\n")
        for e in errors:
            click.echo(f"cell failed: {e}", err=True)
    _write_manifest(out_dir, "compare", cfg, run_seed, t0)
    click.echo(f"wrote {out_path / 'comparison.csv'}")


def main(argv=None):
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help / --version
        return int(exc.exit_code)
    except (click.UsageError, click.BadParameter) as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return USAGE_EXIT
    except FileNotFoundError as exc:
        click.echo(f"data error: missing file {exc.filename or exc}", err=True)
        return DATA_EXIT
    except (DataValidationError, GraphError, StructureError, PriorError,
            SimulationError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return DATA_EXIT
    except (InferenceError, FieldError, FactorError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
