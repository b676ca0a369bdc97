"""Command-line surface: simulate, fit, fit-multi, network, cluster, corr-dist, report.

Exit codes: 0 success, 1 validation error (bad flags, config, or input files),
2 runtime failure. All randomness flows from --seed / the config seeds; there
are no hidden entropy sources.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .downstream import (
    cluster_cells,
    correlation_vs_distance,
    elbow_diagnostics,
    partial_correlations,
    threshold_network,
)
from .gibbs import GibbsConfig, run_gibbs, run_gibbs_multi
from .io import DataFormatError
from .kernels import KernelSpec
from .simulation import SimScenario, run_scenario


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="spatcov", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=False):
        p.add_argument("--config", required=needs_config, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--out-dir", default=None, help="output directory")

    p = sub.add_parser("simulate", help="run a simulation scenario and write its metric table")
    common(p, needs_config=True)

    p = sub.add_parser("fit", help="fit the sampler to one expression/coordinates pair")
    common(p, needs_config=True)
    p.add_argument(
        "--trim-quantile", type=float, default=None,
        help="drop cells with total counts outside the [q, 1-q] quantile band",
    )

    p = sub.add_parser("fit-multi", help="fit the shared-row-covariance model to several samples")
    common(p, needs_config=True)
    p.add_argument("--trim-quantile", type=float, default=None)
    p.add_argument(
        "--intersect-genes",
        action="store_true",
        help="reduce samples to their common gene set instead of requiring identical lists",
    )

    p = sub.add_parser("network", help="partial-correlation network from a precision matrix CSV")
    common(p)
    p.add_argument("--precision", required=True, help="labeled precision matrix CSV")
    p.add_argument("--cutoff", type=float, default=0.1)

    p = sub.add_parser("cluster", help="spectral clustering of a similarity matrix CSV")
    common(p)
    p.add_argument("--similarity", required=True, help="labeled similarity matrix CSV")
    p.add_argument("--k", type=int, required=True, help="embedding dimension")
    p.add_argument("--clusters", type=int, required=True, help="number of clusters")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--k-max", type=int, default=10, help="eigenvalues to report")
    p.add_argument("--clusters-max", type=int, default=10, help="WCSS curve upper bound")
    p.add_argument("--negative", choices=("clamp", "abs"), default="clamp")

    p = sub.add_parser("corr-dist", help="correlation-vs-distance pairs for plotting")
    common(p)
    p.add_argument("--similarity", required=True, help="labeled correlation matrix CSV")
    p.add_argument("--coords", required=True, help="cell_id,x,y[,z] CSV")

    p = sub.add_parser("report", help="log-likelihood trace and autocorrelation data")
    common(p)
    p.add_argument("--trace", required=True, help="theta_trace.csv from a fit")
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--max-lag", type=int, default=50)

    return parser


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise DataFormatError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"config file {path} is not valid JSON: {exc}") from exc


def _gibbs_config(cfg, seed_override, n_default_seed=0):
    section = dict(cfg.get("gibbs", {}))
    if seed_override is not None:
        section["seed"] = seed_override
    section.setdefault("seed", n_default_seed)
    known = {
        "seed",
        "iterations",
        "burn_in",
        "m",
        "iw_df",
        "iw_scale",
        "log_theta_init",
        "proposal_shape_init",
        "target_acceptance",
        "spatial_dim",
    }
    unknown = set(section) - known
    if unknown:
        raise DataFormatError(f"unknown gibbs config keys: {sorted(unknown)}")
    return GibbsConfig(**section)


def _kernel_spec(entry):
    try:
        return KernelSpec(
            family=entry["family"],
            variance=float(entry.get("variance", 1.0)),
            range_=float(entry.get("range", 1.0)),
            smoothness=float(entry.get("smoothness", 0.5)),
        )
    except KeyError as exc:
        raise DataFormatError(f"kernel spec missing key {exc}") from exc


def _out_dir(args, cfg):
    out = args.out_dir or cfg.get("output", {}).get("dir", ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_dataset(entry, cfg_input, trim_override=None):
    expr = entry.get("expression")
    coords = entry.get("coords")
    if not expr or not coords:
        raise DataFormatError("input section needs 'expression' and 'coords' paths")
    ds = sio.ingest(expr, coords)
    trim = trim_override if trim_override is not None else float(cfg_input.get("trim_quantile", 0.0))
    if trim:
        ds, dropped = sio.trim_extreme_cells(ds, trim)
        if dropped:
            print(f"trimmed {len(dropped)} extreme cells", file=sys.stderr)
    if cfg_input.get("normalize", False):
        ds = sio.log_normalize(ds)
    return ds


def _cmd_fit(args, cfg):
    cfg_input = cfg.get("input", {})
    ds = _load_dataset(cfg_input, cfg_input, trim_override=args.trim_quantile)
    config = _gibbs_config(cfg, args.seed)
    samples = run_gibbs(ds, config)
    out = _out_dir(args, cfg)
    thin = int(cfg.get("output", {}).get("thin", 10))
    desk = int(cfg.get("output", {}).get("desk_limit", 5000))
    manifest = sio.serialize_posterior(samples, out, datasets=[ds], thin=thin, desk_limit=desk)
    print(f"fit complete: acceptance {manifest['acceptance_rate']:.3f}, outputs in {out}")
    return 0


def _intersect_gene_sets(datasets):
    common = set(datasets[0].gene_names)
    for ds in datasets[1:]:
        common &= set(ds.gene_names)
    if not common:
        raise DataFormatError("samples share no genes")
    keep = [g for g in datasets[0].gene_names if g in common]
    out = []
    for ds in datasets:
        index = {g: i for i, g in enumerate(ds.gene_names)}
        rows = [index[g] for g in keep]
        out.append(
            sio.SpatialDataset(
                gene_names=keep,
                cell_ids=ds.cell_ids,
                expression=ds.expression[rows],
                coords=ds.coords,
            )
        )
    return out


def _cmd_fit_multi(args, cfg):
    cfg_input = cfg.get("input", {})
    entries = cfg_input.get("samples")
    if not entries:
        raise DataFormatError("fit-multi needs input.samples: a list of expression/coords pairs")
    datasets = [
        _load_dataset(entry, cfg_input, trim_override=args.trim_quantile) for entry in entries
    ]
    gene_lists = [tuple(ds.gene_names) for ds in datasets]
    if len(set(gene_lists)) > 1:
        if args.intersect_genes:
            datasets = _intersect_gene_sets(datasets)
        else:
            raise DataFormatError(
                "samples have different gene lists; pass --intersect-genes to reduce "
                "to the common set"
            )
    config = _gibbs_config(cfg, args.seed)
    samples = run_gibbs_multi(datasets, config)
    out = _out_dir(args, cfg)
    thin = int(cfg.get("output", {}).get("thin", 10))
    desk = int(cfg.get("output", {}).get("desk_limit", 5000))
    manifest = sio.serialize_posterior(samples, out, datasets=datasets, thin=thin, desk_limit=desk)
    print(f"fit-multi complete: acceptance {manifest['acceptance_rate']:.3f}, outputs in {out}")
    return 0


def _cmd_simulate(args, cfg):
    section = cfg.get("scenario")
    if not section:
        raise DataFormatError("simulate needs a 'scenario' config section")
    gibbs = _gibbs_config(cfg, None)
    kernels = section.get("kernels")
    if kernels is None:
        kernels = [section.get("kernel", {"family": "matern", "smoothness": 0.25})]
    scenario = SimScenario(
        n_genes=int(section["N"]),
        n_cells=section["n"],
        kernels=[_kernel_spec(k) for k in kernels],
        scale_kind=section.get("scale_kind", "AR"),
        gibbs=gibbs,
        rho=float(section.get("rho", 0.5)),
        replicates=int(section.get("replicates", 30)),
        seed=int(args.seed if args.seed is not None else section.get("seed", 0)),
    )
    result = run_scenario(scenario, threads=args.threads)
    out = _out_dir(args, cfg)
    path = out / "scenario_metrics.csv"
    sio.write_scenario_csv(path, result)
    failed = result.n_failed
    print(f"simulate complete: {len(result.metrics) - failed} ok, {failed} failed, table in {path}")
    return 0


def _cmd_network(args, cfg):
    names, prec = sio.read_labeled_matrix(args.precision)
    pcorr = partial_correlations(prec)
    net = threshold_network(pcorr, args.cutoff, names)
    out = _out_dir(args, cfg)
    sio.write_labeled_matrix(out / "partial_correlations.csv", pcorr, names)
    sio.write_network_tsv(out / "network_edges.tsv", net)
    print(f"network: {len(net.edges)} edges at cutoff {args.cutoff}, outputs in {out}")
    return 0


def _cmd_cluster(args, cfg):
    ids, sim = sio.read_labeled_matrix(args.similarity)
    seed = args.seed if args.seed is not None else 0
    result = cluster_cells(
        sim, k=args.k, n_clusters=args.clusters, seed=seed, restarts=args.restarts,
        negative=args.negative,
    )
    eigvals, wcss_curve = elbow_diagnostics(
        sim, k=args.k, k_max=args.k_max, cluster_max=args.clusters_max,
        seed=seed, restarts=args.restarts, negative=args.negative,
    )
    out = _out_dir(args, cfg)
    sio.write_pairs_csv(
        out / "cluster_labels.csv", ["cell_id", "label"],
        [(cid, int(lab)) for cid, lab in zip(ids, result.labels)],
    )
    sio.write_pairs_csv(
        out / "laplacian_eigenvalues.csv", ["index", "eigenvalue"],
        [(i + 1, float(v)) for i, v in enumerate(eigvals)],
    )
    sio.write_pairs_csv(
        out / "wcss_curve.csv", ["clusters", "wcss"],
        [(k + 1, float(v)) for k, v in enumerate(wcss_curve)],
    )
    print(f"cluster: wcss {result.wcss:.4f} with {args.clusters} clusters, outputs in {out}")
    return 0


def _cmd_corr_dist(args, cfg):
    ids, sim = sio.read_labeled_matrix(args.similarity)
    coords_ds = _read_coords(args.coords, ids)
    pairs = correlation_vs_distance(sim, coords_ds)
    out = _out_dir(args, cfg)
    sio.write_pairs_csv(
        out / "corr_vs_distance.csv", ["distance", "correlation"],
        [(float(a), float(b)) for a, b in pairs],
    )
    print(f"corr-dist: {pairs.shape[0]} pairs, outputs in {out}")
    return 0


def _read_coords(path, cell_ids):
    import csv as _csv

    with open(path, newline="") as fh:
        rows = list(_csv.reader(fh))
    header = [h.strip().lower() for h in rows[0]]
    if header[0] != "cell_id":
        raise DataFormatError(f"{path}: first column must be cell_id")
    coord_map = {row[0].strip(): [float(v) for v in row[1:]] for row in rows[1:] if row}
    missing = [cid for cid in cell_ids if cid not in coord_map]
    if missing:
        raise DataFormatError(f"{path}: missing coordinates for {missing[:10]}")
    return np.array([coord_map[cid] for cid in cell_ids])


def _cmd_report(args, cfg):
    import csv as _csv

    with open(args.trace, newline="") as fh:
        rows = list(_csv.DictReader(fh))
    if not rows or "loglik" not in rows[0]:
        raise DataFormatError(f"{args.trace}: expected a theta_trace.csv with a loglik column")
    loglik = np.array([float(r["loglik"]) for r in rows])
    iters = np.array([int(r["iteration"]) for r in rows])
    if not 0 <= args.burn_in < len(loglik):
        raise DataFormatError(f"--burn-in must lie in [0, {len(loglik)})")
    post = loglik[args.burn_in :]
    centered = post - post.mean()
    denom = float(centered @ centered)
    max_lag = min(args.max_lag, len(post) - 1)
    acf = [1.0]
    for lag in range(1, max_lag + 1):
        acf.append(float(centered[:-lag] @ centered[lag:]) / denom if denom else 0.0)
    out = _out_dir(args, cfg)
    sio.write_pairs_csv(
        out / "loglik_trace.csv", ["iteration", "loglik"],
        [(int(i), float(v)) for i, v in zip(iters[args.burn_in :], post)],
    )
    sio.write_pairs_csv(
        out / "loglik_acf.csv", ["lag", "autocorrelation"],
        [(lag, float(v)) for lag, v in enumerate(acf)],
    )
    print(f"report: {len(post)} retained iterations, lag-{max_lag} autocorrelation, outputs in {out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "fit-multi": _cmd_fit_multi,
    "network": _cmd_network,
    "cluster": _cmd_cluster,
    "corr-dist": _cmd_corr_dist,
    "report": _cmd_report,
}


def cli_dispatch(argv) -> int:
    """Parse and run; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = _load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except (DataFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
