"""Dataset ingestion, validation, standardization, and result export.

The on-disk format is a long CSV with header
``area_id,year,count,population,<covariate columns>`` (comma separated,
``.`` decimal, UTF-8).  Time-constant covariates may instead be supplied in
a separate per-area CSV with header ``area_id,<covariate columns>`` and are
broadcast over years.  Areas are ordered by sorted ``area_id`` (numeric
order when all ids parse as integers) and graph node ``k`` corresponds to
the k-th area in that order.
"""

from __future__ import annotations

import json

import numpy as np
import pandas as pd

from .graphs import Graph, read_adjacency_csv, read_edge_list

__all__ = [
    "DataValidationError",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "export_results",
    "log_incidence",
    "standardize_columns",
]

RESERVED_COLUMNS = ("area_id", "year", "count", "population")


class DataValidationError(ValueError):
    """Input data violates the dataset contract; message carries row detail."""


def standardize_columns(X: np.ndarray):
    """Standardize (T, n, p) covariates pooling all years per column.

    Returns the standardized array plus per-column means and population
    standard deviations.  Constant columns are rejected.
    """
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=(0, 1))
    sds = X.std(axis=(0, 1))
    if np.any(sds == 0.0):
        bad = np.flatnonzero(sds == 0.0).tolist()
        raise DataValidationError(f"constant covariate column(s) at positions {bad}")
    return (X - means) / sds, means, sds


class Dataset:
    """Validated long-format panel of counts over areas x years.

    Attributes
    ----------
    area_ids : list
        Area identifiers in node order (sorted).
    years : list of int
    y : ndarray, shape (T, n)
        Nonnegative integer counts.
    pop : ndarray, shape (T, n)
        Positive populations at risk.
    X : ndarray, shape (T, n, p)
        Standardized covariates (zero mean, unit variance pooled over
        years).
    X_raw : ndarray, shape (T, n, p)
        Covariates as supplied.
    standardization : dict
        Covariate name -> (mean, sd) of the raw-to-model transform.
    graph : Graph or None
        Areal graph over the same node order; required for fitting.
    truth : dict or None
        Ground-truth record attached by the simulator.
    filters : dict
        Covariate name -> filter record set by the confounding module.
    """

    def __init__(self, area_ids, years, y, pop, X_raw, covariate_names, graph=None):
        self.area_ids = list(area_ids)
        self.years = [int(v) for v in years]
        self.y = np.asarray(y, dtype=np.int64)
        self.pop = np.asarray(pop, dtype=float)
        self.covariate_names = list(covariate_names)
        self.X_raw = np.asarray(X_raw, dtype=float)
        if self.X_raw.size:
            self.X, means, sds = standardize_columns(self.X_raw)
            self.standardization = {
                name: (float(m), float(s))
                for name, m, s in zip(self.covariate_names, means, sds)
            }
        else:
            self.X = self.X_raw.reshape(self.T, self.n, 0)
            self.standardization = {}
        self.graph = graph
        self.truth = None
        self.filters = {}
        self._validate()

    @property
    def n(self) -> int:
        return len(self.area_ids)

    @property
    def T(self) -> int:
        return len(self.years)

    @property
    def p(self) -> int:
        return len(self.covariate_names)

    @property
    def n_obs(self) -> int:
        return self.n * self.T

    def y_flat(self) -> np.ndarray:
        """Counts stacked time-major, matching the latent-field layout."""
        return self.y.reshape(-1)

    def pop_flat(self) -> np.ndarray:
        return self.pop.reshape(-1)

    def covariate_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise DataValidationError(
                f"unknown covariate {name!r}; available: {self.covariate_names}"
            ) from None

    def replace_covariates(self, X: np.ndarray, filters: dict) -> "Dataset":
        """Copy with modified model-scale covariates (used by filtering)."""
        out = Dataset.__new__(Dataset)
        out.__dict__.update(self.__dict__)
        out.X = np.asarray(X, dtype=float)
        out.filters = dict(self.filters)
        out.filters.update(filters)
        return out

    def _validate(self):
        T, n = self.T, self.n
        if self.y.shape != (T, n) or self.pop.shape != (T, n):
            raise DataValidationError(
                f"counts/population shapes {self.y.shape}/{self.pop.shape} "
                f"do not match (T={T}, n={n})"
            )
        if self.X_raw.shape != (T, n, self.p):
            raise DataValidationError(f"covariate array shape {self.X_raw.shape} invalid")
        bad = np.argwhere(self.y < 0)
        if bad.size:
            t, i = bad[0]
            raise DataValidationError(
                f"negative count for area {self.area_ids[i]!r}, year {self.years[t]}"
            )
        bad = np.argwhere(~(self.pop > 0))
        if bad.size:
            t, i = bad[0]
            raise DataValidationError(
                f"non-positive population for area {self.area_ids[i]!r}, year {self.years[t]}"
            )
        if self.graph is not None and self.graph.n != n:
            raise DataValidationError(
                f"graph has {self.graph.n} nodes but the dataset has {n} areas"
            )


def _sort_key(values):
    try:
        return sorted(values, key=lambda v: int(v))
    except (TypeError, ValueError):
        return sorted(values, key=str)


def _read_long_csv(path):
    frame = pd.read_csv(path)
    missing = [c for c in RESERVED_COLUMNS if c not in frame.columns]
    if missing:
        raise DataValidationError(f"{path}: missing required column(s) {missing}")
    return frame


def load_dataset(counts_path, adjacency_path, area_covariates_path=None):
    """Load and validate a dataset plus its areal graph.

    Parameters
    ----------
    counts_path : str
        Long CSV ``area_id,year,count,population,<covariates...>``.
    adjacency_path : str
        Edge list (``.txt``) or symmetric 0/1 matrix CSV; node k is the
        k-th area in sorted order.
    area_covariates_path : str, optional
        Per-area CSV of time-constant covariates, broadcast over years.

    Returns
    -------
    (Dataset, Graph)
        The graph is also attached to the dataset.
    """
    frame = _read_long_csv(counts_path)
    area_ids = _sort_key(frame["area_id"].unique().tolist())
    years = sorted(int(v) for v in frame["year"].unique())
    n, T = len(area_ids), len(years)
    a_index = {a: i for i, a in enumerate(area_ids)}
    y_index = {v: t for t, v in enumerate(years)}

    dup = frame.duplicated(subset=["area_id", "year"])
    if dup.any():
        rows = frame.loc[dup, ["area_id", "year"]].iloc[0]
        raise DataValidationError(
            f"{counts_path}: duplicate cell area {rows['area_id']!r}, year {rows['year']}"
        )
    if len(frame) != n * T:
        seen = set(zip(frame["area_id"], frame["year"]))
        missing = [
            (a, v) for a in area_ids for v in years if (a, v) not in seen
        ]
        raise DataValidationError(f"{counts_path}: missing cell(s) {missing[:10]}")

    cov_cols = [c for c in frame.columns if c not in RESERVED_COLUMNS]
    for col in ["count", "population", *cov_cols]:
        vals = pd.to_numeric(frame[col], errors="coerce")
        bad = frame.index[vals.isna()]
        if len(bad):
            raise DataValidationError(
                f"{counts_path}: non-numeric or missing {col!r} at row(s) "
                f"{(bad + 2).tolist()[:10]} (1-based, incl. header)"
            )
        frame[col] = vals
    if not np.allclose(frame["count"] % 1, 0):
        bad = frame.index[frame["count"] % 1 != 0]
        raise DataValidationError(
            f"{counts_path}: non-integer count at row(s) {(bad + 2).tolist()[:10]}"
        )

    y = np.zeros((T, n), dtype=np.int64)
    pop = np.zeros((T, n))
    X = np.zeros((T, n, len(cov_cols)))
    ai = frame["area_id"].map(a_index).to_numpy()
    ti = frame["year"].map(y_index).to_numpy()
    y[ti, ai] = frame["count"].to_numpy()
    pop[ti, ai] = frame["population"].to_numpy()
    for j, col in enumerate(cov_cols):
        X[ti, ai, j] = frame[col].to_numpy()

    if area_covariates_path is not None:
        aframe = pd.read_csv(area_covariates_path)
        if "area_id" not in aframe.columns:
            raise DataValidationError(f"{area_covariates_path}: missing 'area_id' column")
        extra = [c for c in aframe.columns if c != "area_id"]
        if set(aframe["area_id"]) != set(area_ids):
            raise DataValidationError(
                f"{area_covariates_path}: area set differs from {counts_path}"
            )
        aframe = aframe.set_index("area_id").loc[area_ids]
        for col in extra:
            vals = pd.to_numeric(aframe[col], errors="coerce")
            if vals.isna().any():
                raise DataValidationError(
                    f"{area_covariates_path}: non-numeric {col!r} for area(s) "
                    f"{aframe.index[vals.isna()].tolist()[:10]}"
                )
            X = np.concatenate([X, np.tile(vals.to_numpy(), (T, 1))[:, :, None]], axis=2)
        cov_cols = cov_cols + extra

    graph = _load_graph(adjacency_path, n)
    ds = Dataset(area_ids, years, y, pop, X, cov_cols, graph=graph)
    return ds, graph


def _load_graph(path, n):
    path = str(path)
    if path.endswith(".csv"):
        return read_adjacency_csv(path, n=n)
    return read_edge_list(path, n=n)


def save_dataset(ds: Dataset, counts_path):
    """Write the long CSV with raw covariate values (round-trip safe)."""
    rows = []
    for t, year in enumerate(ds.years):
        for i, area in enumerate(ds.area_ids):
            rows.append(
                [area, year, int(ds.y[t, i]), ds.pop[t, i]]
                + [ds.X_raw[t, i, j] for j in range(ds.p)]
            )
    frame = pd.DataFrame(rows, columns=list(RESERVED_COLUMNS) + ds.covariate_names)
    frame.to_csv(counts_path, index=False, float_format="%.12g")


def log_incidence(ds: Dataset, eps: float = 0.5) -> pd.DataFrame:
    """Plot-ready log incidence table, log((y + eps*[y=0]) / P).

    The continuity correction ``eps`` applies to zero counts only and
    affects this export alone, never the likelihood.
    """
    counts = ds.y.astype(float)
    counts[counts == 0.0] = eps
    vals = np.log(counts / ds.pop)
    rows = []
    for t, year in enumerate(ds.years):
        for i, area in enumerate(ds.area_ids):
            rows.append([area, year, vals[t, i]])
    return pd.DataFrame(rows, columns=["area_id", "year", "log_incidence"])


def export_results(fit, out_dir, waic_report=None):
    """Write fit summaries as CSV/JSON files into ``out_dir``.

    Emits ``fixed_effects.csv`` (effect, mean, sd, 0.025quant, 0.975quant),
    ``hyperparameters.csv`` (param, mean, sd, Q0.025, Median, Q0.975, with
    the mixing parameter first where present), ``latent_means.csv`` and,
    when ``waic_report`` is given, ``waic.json``.  Re-export of the same
    fit is byte-identical.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    fixed = pd.DataFrame(
        {
            "effect": fit.fixed_names,
            "mean": fit.fixed_mean,
            "sd": fit.fixed_sd,
            "0.025quant": fit.fixed_q025,
            "0.975quant": fit.fixed_q975,
        }
    )
    fixed.to_csv(os.path.join(out_dir, "fixed_effects.csv"), index=False, float_format="%.10g")

    hyper = pd.DataFrame(
        fit.hyper_summary,
        columns=["param", "mean", "sd", "Q0.025", "Median", "Q0.975"],
    )
    hyper.to_csv(os.path.join(out_dir, "hyperparameters.csv"), index=False, float_format="%.10g")

    ds = fit.dataset
    rows = []
    lm = fit.latent_mean.reshape(ds.T, ds.n)
    for t, year in enumerate(ds.years):
        for i, area in enumerate(ds.area_ids):
            rows.append([area, year, lm[t, i]])
    pd.DataFrame(rows, columns=["area_id", "year", "mean"]).to_csv(
        os.path.join(out_dir, "latent_means.csv"), index=False, float_format="%.10g"
    )

    if waic_report is not None:
        with open(os.path.join(out_dir, "waic.json"), "w", encoding="utf-8") as fh:
            json.dump(waic_report.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
