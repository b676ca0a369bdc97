"""Data ingestion, normalization, serialization, and file formats.

All formats round-trip through this module's own readers. Floats serialize
with 17 significant digits so dumps reload bit-exactly.
"""

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .matnorm import SparseCholesky
from .spatial import MaximinOrdering

logger = logging.getLogger(__name__)

_FLOAT_FMT = "%.17g"


class DataFormatError(ValueError):
    """Malformed or inconsistent input data, with location diagnostics."""


@dataclass
class SpatialDataset:
    """Gene-by-cell expression with per-cell coordinates."""

    gene_names: list
    cell_ids: list
    expression: np.ndarray
    coords: np.ndarray
    ordering: MaximinOrdering = None

    def __post_init__(self):
        self.expression = np.asarray(self.expression, dtype=np.float64)
        self.coords = np.asarray(self.coords, dtype=np.float64)
        n_genes, n_cells = self.expression.shape
        if len(self.gene_names) != n_genes or len(self.cell_ids) != n_cells:
            raise DataFormatError(
                f"expression is {n_genes}x{n_cells} but there are "
                f"{len(self.gene_names)} gene names and {len(self.cell_ids)} cell ids"
            )
        if self.coords.shape[0] != n_cells:
            raise DataFormatError(
                f"{n_cells} cells but {self.coords.shape[0]} coordinate rows"
            )

    @property
    def n_genes(self) -> int:
        return self.expression.shape[0]

    @property
    def n_cells(self) -> int:
        return self.expression.shape[1]

    @classmethod
    def from_arrays(cls, expression, coords):
        expression = np.asarray(expression, dtype=np.float64)
        names = [f"g{i + 1}" for i in range(expression.shape[0])]
        ids = [f"c{j + 1}" for j in range(expression.shape[1])]
        return cls(gene_names=names, cell_ids=ids, expression=expression, coords=coords)


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError as exc:
        raise DataFormatError(f"non-numeric value {text!r} at {where}") from exc
    if not np.isfinite(value):
        raise DataFormatError(f"non-finite value {text!r} at {where}")
    return value


def ingest(expression_path, coords_path) -> SpatialDataset:
    """Load and align an expression CSV and a coordinates CSV.

    Expression: header row of cell ids, first column of gene names, numeric
    body. Coordinates: columns cell_id, x, y[, z]. Cells are joined by id;
    coordinate rows without expression are dropped with a warning, expression
    cells without coordinates are an error listing the offenders.
    """
    with open(expression_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise DataFormatError(f"{expression_path}: expected a header row of cell ids")
    cell_ids = [c.strip() for c in rows[0][1:]]
    dup = _duplicates(cell_ids)
    if dup:
        raise DataFormatError(f"{expression_path}: duplicate cell ids {sorted(dup)}")
    gene_names, data = [], []
    for ridx, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(cell_ids) + 1:
            raise DataFormatError(
                f"{expression_path}: row {ridx} has {len(row) - 1} values, "
                f"expected {len(cell_ids)}"
            )
        gene_names.append(row[0].strip())
        data.append(
            [
                _parse_float(v, f"{expression_path} row {ridx} column {cidx + 2}")
                for cidx, v in enumerate(row[1:])
            ]
        )
    dup = _duplicates(gene_names)
    if dup:
        raise DataFormatError(f"{expression_path}: duplicate gene names {sorted(dup)}")
    if not gene_names:
        raise DataFormatError(f"{expression_path}: no gene rows found")
    expression = np.array(data)

    with open(coords_path, newline="") as fh:
        crows = list(csv.reader(fh))
    if not crows:
        raise DataFormatError(f"{coords_path}: empty file")
    header = [h.strip().lower() for h in crows[0]]
    if header[:3] not in (["cell_id", "x", "y"],) and header[:4] != ["cell_id", "x", "y", "z"]:
        raise DataFormatError(
            f"{coords_path}: header must be cell_id,x,y[,z], got {crows[0]}"
        )
    dim = len(header) - 1
    coord_map = {}
    for ridx, row in enumerate(crows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise DataFormatError(f"{coords_path}: row {ridx} has {len(row)} fields, expected {dim + 1}")
        cid = row[0].strip()
        if cid in coord_map:
            raise DataFormatError(f"{coords_path}: duplicate cell id {cid!r} at row {ridx}")
        coord_map[cid] = [
            _parse_float(v, f"{coords_path} row {ridx} column {c + 2}") for c, v in enumerate(row[1:])
        ]

    missing = [cid for cid in cell_ids if cid not in coord_map]
    if missing:
        raise DataFormatError(
            f"{len(missing)} expression cells have no coordinates: {missing[:20]}"
        )
    extra = [cid for cid in coord_map if cid not in set(cell_ids)]
    if extra:
        logger.warning(
            "dropping %d coordinate rows with no expression column: %s",
            len(extra),
            extra[:20],
        )
    coords = np.array([coord_map[cid] for cid in cell_ids])
    return SpatialDataset(
        gene_names=gene_names, cell_ids=cell_ids, expression=expression, coords=coords
    )


def _duplicates(items):
    seen, dup = set(), set()
    for it in items:
        if it in seen:
            dup.add(it)
        seen.add(it)
    return dup


def log_normalize(dataset: SpatialDataset) -> SpatialDataset:
    """log(1 + count * M / total_j) with M the median of the per-cell totals."""
    expr = dataset.expression
    if np.any(expr < 0):
        bad = np.argwhere(expr < 0)[0]
        raise DataFormatError(
            f"negative count at gene {dataset.gene_names[bad[0]]!r}, "
            f"cell {dataset.cell_ids[bad[1]]!r}"
        )
    totals = expr.sum(axis=0)
    zero = np.flatnonzero(totals == 0)
    if zero.size:
        ids = [dataset.cell_ids[j] for j in zero[:20]]
        raise DataFormatError(f"{zero.size} cells have zero total counts: {ids}")
    median = float(np.median(totals))
    scaled = np.log1p(expr * (median / totals)[None, :])
    return replace(dataset, expression=scaled, ordering=dataset.ordering)


def trim_extreme_cells(dataset: SpatialDataset, quantile: float):
    """Drop cells whose total count is outside the [q, 1-q] quantile band.

    Returns (trimmed dataset, list of dropped cell ids).
    """
    if not 0 <= quantile < 0.5:
        raise ValueError("trim quantile must lie in [0, 0.5)")
    if quantile == 0:
        return dataset, []
    totals = dataset.expression.sum(axis=0)
    lo, hi = np.quantile(totals, [quantile, 1.0 - quantile])
    keep = (totals >= lo) & (totals <= hi)
    dropped = [cid for cid, k in zip(dataset.cell_ids, keep) if not k]
    trimmed = SpatialDataset(
        gene_names=dataset.gene_names,
        cell_ids=[cid for cid, k in zip(dataset.cell_ids, keep) if k],
        expression=dataset.expression[:, keep],
        coords=dataset.coords[keep],
    )
    return trimmed, dropped


# ---------------------------------------------------------------------------
# matrix / table formats
# ---------------------------------------------------------------------------


def write_labeled_matrix(path, matrix, labels):
    """CSV with a label header row and label-leading rows; full float precision."""
    mat = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(labels))
        for name, row in zip(labels, mat):
            writer.writerow([name] + [_FLOAT_FMT % v for v in row])


def read_labeled_matrix(path):
    """Inverse of write_labeled_matrix; returns (labels, matrix)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = [c.strip() for c in rows[0][1:]]
    mat = np.array(
        [[_parse_float(v, f"{path} row {i + 2}") for v in row[1:]] for i, row in enumerate(rows[1:]) if row]
    )
    if mat.shape != (len(labels), len(labels)):
        raise DataFormatError(f"{path}: matrix is not square against its labels")
    return labels, mat


def write_pairs_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_FLOAT_FMT % v if isinstance(v, float) else v for v in row])


def write_network_tsv(path, network):
    """TSV edge list: gene_i, gene_j, weight."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(["gene_i", "gene_j", "weight"])
        for gi, gj, w in network.named_edges():
            writer.writerow([gi, gj, _FLOAT_FMT % w])


def write_ordering_csv(path, ordering: MaximinOrdering, cell_ids):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "cell_id"])
        for rank, orig in enumerate(ordering.order):
            writer.writerow([rank, cell_ids[orig]])


# ---------------------------------------------------------------------------
# sparse factor dumps
# ---------------------------------------------------------------------------


def dump_factors(path, factors):
    """Column-compressed text dump of sparse factors, one block per draw.

    Per column line: rank ; neighbor ranks ; values ; diagonal. Reloads
    bit-exactly.
    """
    factors = list(factors)
    with open(path, "w") as fh:
        first = factors[0]
        fh.write(f"# spatcov factors n={first.n} m={first.m} draws={len(factors)}\n")
        for t, fac in enumerate(factors):
            fh.write(f"# draw {t}\n")
            for i in range(fac.n):
                k = fac.lens[i]
                idx = ",".join(str(v) for v in fac.indices[i, :k])
                vals = ",".join(_FLOAT_FMT % v for v in fac.values[i, :k])
                fh.write(f"{i} ; {idx} ; {vals} ; {_FLOAT_FMT % fac.diag[i]}\n")


def load_factors(path):
    """Parse a factor dump back into a list of SparseCholesky objects."""
    with open(path) as fh:
        lines = fh.readlines()
    head = lines[0].strip()
    if not head.startswith("# spatcov factors"):
        raise DataFormatError(f"{path}: not a factor dump")
    meta = dict(part.split("=") for part in head.split()[3:])
    n, m, draws = int(meta["n"]), int(meta["m"]), int(meta["draws"])
    factors = []
    indices = values = diag = None
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("# draw"):
            if indices is not None:
                factors.append(SparseCholesky(indices=indices, values=values, diag=diag))
            indices = np.full((n, m), -1, dtype=np.int64)
            values = np.zeros((n, m))
            diag = np.empty(n)
            continue
        col, idx, vals, dval = [part.strip() for part in line.split(";")]
        i = int(col)
        if idx:
            ids = [int(v) for v in idx.split(",")]
            indices[i, : len(ids)] = ids
            values[i, : len(ids)] = [float(v) for v in vals.split(",")]
        diag[i] = float(dval)
    if indices is not None:
        factors.append(SparseCholesky(indices=indices, values=values, diag=diag))
    if len(factors) != draws:
        raise DataFormatError(f"{path}: header promises {draws} draws, found {len(factors)}")
    return factors


# ---------------------------------------------------------------------------
# posterior serialization
# ---------------------------------------------------------------------------


def config_digest(config_dict) -> str:
    """Stable hash of the scientific configuration (execution knobs excluded)."""
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def gibbs_config_dict(config) -> dict:
    return {
        "seed": int(config.seed),
        "iterations": int(config.iterations),
        "burn_in": int(config.burn_in),
        "m": int(config.m),
        "iw_df": None if config.iw_df is None else float(config.iw_df),
        "iw_scale": None if config.iw_scale is None else np.asarray(config.iw_scale).tolist(),
        "log_theta_init": [float(v) for v in config.log_theta_init],
        "proposal_shape_init": np.asarray(config.proposal_shape_init).tolist(),
        "target_acceptance": float(config.target_acceptance),
        "spatial_dim": None if config.spatial_dim is None else int(config.spatial_dim),
    }


def serialize_posterior(samples, out_dir, datasets=None, thin: int = 10, desk_limit: int = 5000):
    """Write the standard posterior output tree for one chain.

    Emits the hyperparameter/log-likelihood trace, posterior-mean row
    covariance, precision, and correlation, per-sample column correlation
    (skipped above ``desk_limit`` cells), per-sample factor dumps every
    ``thin`` kept draws, orderings, and a JSON manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}

    theta = samples.theta_trace()
    trace_path = out / "theta_trace.csv"
    with open(trace_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "theta1", "theta2", "theta3", "loglik", "accepted"])
        for t in range(samples.iterations):
            writer.writerow(
                [
                    t + 1,
                    _FLOAT_FMT % theta[t, 0],
                    _FLOAT_FMT % theta[t, 1],
                    _FLOAT_FMT % theta[t, 2],
                    _FLOAT_FMT % samples.loglik_trace[t],
                    int(samples.accepted[t]),
                ]
            )
    files["theta_trace"] = trace_path.name

    if datasets is not None:
        gene_names = list(datasets[0].gene_names)
        cell_id_lists = [list(ds.cell_ids) for ds in datasets]
    else:
        gene_names = [f"g{i + 1}" for i in range(samples.n_genes)]
        cell_id_lists = [[f"c{j + 1}" for j in range(n)] for n in samples.n_cells]

    write_labeled_matrix(out / "lambda_mean.csv", samples.row_cov_mean(), gene_names)
    write_labeled_matrix(out / "lambda_precision_mean.csv", samples.row_precision_mean(), gene_names)
    write_labeled_matrix(out / "lambda_corr_mean.csv", samples.row_corr_mean(), gene_names)
    files["lambda_mean"] = "lambda_mean.csv"
    files["lambda_precision_mean"] = "lambda_precision_mean.csv"
    files["lambda_corr_mean"] = "lambda_corr_mean.csv"

    for r in range(samples.n_samples):
        tag = f"_sample{r + 1}" if samples.n_samples > 1 else ""
        if samples.n_cells[r] <= desk_limit:
            corr = samples.col_corr_mean(r, desk_limit=desk_limit)
            write_labeled_matrix(out / f"col_corr_mean{tag}.csv", corr, cell_id_lists[r])
            files[f"col_corr_mean{tag}"] = f"col_corr_mean{tag}.csv"
        write_ordering_csv(out / f"ordering{tag}.csv", samples.orderings[r], cell_id_lists[r])
        files[f"ordering{tag}"] = f"ordering{tag}.csv"
        factors = [samples.factor_draw(t, r) for t in range(0, samples.n_kept, thin)]
        dump_factors(out / f"factors{tag}.txt", factors)
        files[f"factors{tag}"] = f"factors{tag}.txt"

    manifest = {
        "seed": samples.seed,
        "config_digest": config_digest(gibbs_config_dict(samples.config)),
        "n_genes": samples.n_genes,
        "n_cells": samples.n_cells,
        "iterations": samples.iterations,
        "burn_in": samples.burn_in,
        "m": samples.m,
        "acceptance_rate": samples.acceptance_rate,
        "thin": thin,
        "files": files,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def write_scenario_csv(path, result):
    """Per-replicate metric rows plus mean/sd summary rows, Table-style."""
    multi = result.scenario.n_samples > 1
    sigma_cols = (
        [f"re_sigma_{r + 1}" for r in range(result.scenario.n_samples)] if multi else ["re_sigma"]
    )
    header = ["replicate", "status"]
    if not multi:
        header += ["kl_n_log", "kl_mn_log"]
    header += sigma_cols + ["re_lambda"]

    def fmt(v):
        return _FLOAT_FMT % v if np.isfinite(v) else ("-inf" if v == -np.inf else "nan")

    summary = result.summary()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for met in result.metrics:
            if not met.ok:
                writer.writerow([met.replicate, f"failed: {met.error}"] + [""] * (len(header) - 2))
                continue
            row = [met.replicate, "ok"]
            if not multi:
                row += [fmt(met.kl_n_log), fmt(met.kl_mn_log)]
            row += [fmt(v) for v in met.re_sigma] + [fmt(met.re_lambda)]
            writer.writerow(row)
        for stat_idx, stat in enumerate(("mean", "sd")):
            row = [stat, ""]
            if not multi:
                row += [fmt(summary["kl_n_log"][stat_idx]), fmt(summary["kl_mn_log"][stat_idx])]
            row += [fmt(summary[f"re_sigma_{r + 1}"][stat_idx]) for r in range(result.scenario.n_samples)]
            row += [fmt(summary["re_lambda"][stat_idx])]
            writer.writerow(row)
