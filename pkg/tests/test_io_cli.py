"""Ingestion, formats, serialization round trips, and the CLI surface."""

import json
import logging
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from spatcov.cli import cli_dispatch
from spatcov.dists import inverse_wishart_draw, matrix_normal_draw
from spatcov.gibbs import GibbsConfig, run_gibbs
from spatcov.io import (
    DataFormatError,
    SpatialDataset,
    config_digest,
    dump_factors,
    gibbs_config_dict,
    ingest,
    load_factors,
    log_normalize,
    read_labeled_matrix,
    serialize_posterior,
    trim_extreme_cells,
    write_labeled_matrix,
)
from spatcov.kernels import KernelSpec, covariance_matrix


def write_toy_files(tmp_path, expr_rows, coord_rows):
    expr = tmp_path / "expr.csv"
    coords = tmp_path / "coords.csv"
    expr.write_text("\n".join(",".join(map(str, row)) for row in expr_rows) + "\n")
    coords.write_text("\n".join(",".join(map(str, row)) for row in coord_rows) + "\n")
    return str(expr), str(coords)


def toy_files(tmp_path):
    return write_toy_files(
        tmp_path,
        [["gene", "c1", "c2", "c3"], ["g1", 1, 2, 3], ["g2", 4, 5, 6]],
        [["cell_id", "x", "y"], ["c1", 0.0, 0.0], ["c2", 1.0, 0.0], ["c3", 0.0, 1.0]],
    )


def simulated_dataset(rng, n_genes=4, n_cells=30):
    pts = rng.uniform(size=(n_cells, 2))
    sig = covariance_matrix(pts, KernelSpec("matern", 1.0, 1.0, 0.5), jitter=1e-8)
    lam = inverse_wishart_draw(n_genes + 2, np.eye(n_genes), rng)
    return SpatialDataset.from_arrays(matrix_normal_draw(lam, sig, rng), pts)


class TestIngest:
    def test_toy_shapes(self, tmp_path):
        ds = ingest(*toy_files(tmp_path))
        assert ds.expression.shape == (2, 3)
        assert ds.gene_names == ["g1", "g2"]
        assert ds.cell_ids == ["c1", "c2", "c3"]
        assert ds.coords.shape == (3, 2)

    def test_extra_coords_dropped_with_warning(self, tmp_path, caplog):
        expr, coords = write_toy_files(
            tmp_path,
            [["gene", "c1", "c2"], ["g1", 1, 2]],
            [["cell_id", "x", "y"], ["c1", 0, 0], ["c2", 1, 0], ["c9", 5, 5]],
        )
        with caplog.at_level(logging.WARNING, logger="spatcov.io"):
            ds = ingest(expr, coords)
        assert ds.n_cells == 2
        assert any("c9" in rec.getMessage() for rec in caplog.records)

    def test_shuffled_coords_equal_sorted(self, tmp_path):
        expr, coords = write_toy_files(
            tmp_path,
            [["gene", "a", "b"], ["g1", 1, 2]],
            [["cell_id", "x", "y"], ["b", 3, 4], ["a", 1, 2]],
        )
        ds = ingest(expr, coords)
        assert np.allclose(ds.coords, [[1, 2], [3, 4]])

    def test_missing_coords_rejected_with_list(self, tmp_path):
        expr, coords = write_toy_files(
            tmp_path,
            [["gene", "c1", "c2"], ["g1", 1, 2]],
            [["cell_id", "x", "y"], ["c1", 0, 0]],
        )
        with pytest.raises(DataFormatError, match="c2"):
            ingest(expr, coords)

    def test_duplicate_cell_ids_rejected(self, tmp_path):
        expr, coords = write_toy_files(
            tmp_path,
            [["gene", "c1", "c1"], ["g1", 1, 2]],
            [["cell_id", "x", "y"], ["c1", 0, 0]],
        )
        with pytest.raises(DataFormatError, match="duplicate"):
            ingest(expr, coords)

    def test_non_numeric_cell_diagnosed(self, tmp_path):
        expr, coords = write_toy_files(
            tmp_path,
            [["gene", "c1", "c2"], ["g1", 1, "oops"]],
            [["cell_id", "x", "y"], ["c1", 0, 0], ["c2", 1, 0]],
        )
        with pytest.raises(DataFormatError, match="row 2 column 3"):
            ingest(expr, coords)

    def test_ragged_row_diagnosed(self, tmp_path):
        expr, coords = write_toy_files(
            tmp_path,
            [["gene", "c1", "c2"], ["g1", 1]],
            [["cell_id", "x", "y"], ["c1", 0, 0], ["c2", 1, 0]],
        )
        with pytest.raises(DataFormatError, match="row 2"):
            ingest(expr, coords)


class TestLogNormalize:
    def test_single_cell_is_log1p(self, tmp_path):
        ds = SpatialDataset(["g1", "g2"], ["c1"], np.array([[3.0], [5.0]]), np.zeros((1, 2)))
        out = log_normalize(ds)
        assert np.allclose(out.expression, np.log1p([[3.0], [5.0]]))

    def test_two_cell_frozen_value(self):
        # totals 10 and 30, median 20: entry 5 in cell 1 becomes log(1 + 5*2)
        expr = np.array([[5.0, 10.0], [5.0, 20.0]])
        ds = SpatialDataset(["g1", "g2"], ["c1", "c2"], expr, np.zeros((2, 2)))
        out = log_normalize(ds)
        assert out.expression[0, 0] == pytest.approx(math.log(11.0), rel=1e-14)

    def test_equal_totals_uniform_log1p(self):
        expr = np.array([[1.0, 2.0], [3.0, 2.0]])
        ds = SpatialDataset(["g1", "g2"], ["c1", "c2"], expr, np.zeros((2, 2)))
        out = log_normalize(ds)
        assert np.allclose(out.expression, np.log1p(expr))

    def test_zero_total_cell_rejected(self):
        ds = SpatialDataset(["g1"], ["c1", "c2"], np.array([[1.0, 0.0]]), np.zeros((2, 2)))
        with pytest.raises(DataFormatError, match="zero total"):
            log_normalize(ds)

    def test_negative_counts_rejected(self):
        ds = SpatialDataset(["g1"], ["c1"], np.array([[-1.0]]), np.zeros((1, 2)))
        with pytest.raises(DataFormatError, match="negative"):
            log_normalize(ds)


class TestTrimExtremeCells:
    def test_drops_tails(self):
        expr = np.array([[1.0, 10.0, 11.0, 12.0, 100.0]])
        ds = SpatialDataset(["g1"], [f"c{i}" for i in range(5)], expr, np.zeros((5, 2)))
        trimmed, dropped = trim_extreme_cells(ds, 0.2)
        assert dropped == ["c0", "c4"]
        assert trimmed.n_cells == 3

    def test_zero_quantile_noop(self):
        expr = np.array([[1.0, 2.0]])
        ds = SpatialDataset(["g1"], ["c1", "c2"], expr, np.zeros((2, 2)))
        trimmed, dropped = trim_extreme_cells(ds, 0.0)
        assert dropped == [] and trimmed is ds


class TestFormats:
    def test_labeled_matrix_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        mat = rng.standard_normal((4, 4))
        mat = mat @ mat.T
        path = tmp_path / "m.csv"
        write_labeled_matrix(path, mat, ["a", "b", "c", "d"])
        labels, back = read_labeled_matrix(path)
        assert labels == ["a", "b", "c", "d"]
        assert np.array_equal(back, mat)

    def test_factor_dump_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        ds = simulated_dataset(rng, n_cells=20)
        samples = run_gibbs(ds, GibbsConfig(seed=3, iterations=40, burn_in=20, m=4))
        factors = [samples.factor_draw(t) for t in range(0, 20, 5)]
        path = tmp_path / "factors.txt"
        dump_factors(path, factors)
        loaded = load_factors(path)
        assert len(loaded) == len(factors)
        for a, b in zip(factors, loaded):
            assert np.array_equal(a.indices, b.indices)
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.diag, b.diag)

    def test_config_digest_changes_with_config(self):
        a = gibbs_config_dict(GibbsConfig(seed=1, iterations=10, burn_in=5))
        b = gibbs_config_dict(GibbsConfig(seed=1, iterations=11, burn_in=5))
        assert config_digest(a) != config_digest(b)
        assert config_digest(a) == config_digest(dict(a))


class TestSerializePosterior:
    def test_output_tree(self, tmp_path):
        rng = np.random.default_rng(2)
        ds = simulated_dataset(rng, n_cells=15)
        samples = run_gibbs(ds, GibbsConfig(seed=5, iterations=30, burn_in=10, m=4))
        manifest = serialize_posterior(samples, tmp_path, datasets=[ds], thin=5)
        assert (tmp_path / "manifest.json").exists()
        with open(tmp_path / "manifest.json") as fh:
            assert json.load(fh)["seed"] == 5
        trace = (tmp_path / "theta_trace.csv").read_text().strip().splitlines()
        assert len(trace) == 31  # header + one row per iteration
        labels, lam = read_labeled_matrix(tmp_path / "lambda_mean.csv")
        assert labels == ds.gene_names
        assert np.array_equal(lam, samples.row_cov_mean())
        loaded = load_factors(tmp_path / "factors.txt")
        assert len(loaded) == math.ceil(samples.n_kept / 5)
        assert manifest["acceptance_rate"] == samples.acceptance_rate

    def test_desk_gate_skips_col_corr(self, tmp_path):
        rng = np.random.default_rng(3)
        ds = simulated_dataset(rng, n_cells=12)
        samples = run_gibbs(ds, GibbsConfig(seed=5, iterations=20, burn_in=10, m=3))
        serialize_posterior(samples, tmp_path, datasets=[ds], thin=5, desk_limit=5)
        assert not (tmp_path / "col_corr_mean.csv").exists()


def _hash_tree(root):
    out = {}
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


def make_fit_config(tmp_path, rng, n_cells=15, iterations=30):
    ds = simulated_dataset(rng, n_cells=n_cells)
    expr_rows = [["gene"] + ds.cell_ids] + [
        [g] + ["%.17g" % v for v in row] for g, row in zip(ds.gene_names, ds.expression)
    ]
    coord_rows = [["cell_id", "x", "y"]] + [
        [cid, "%.17g" % x, "%.17g" % y] for cid, (x, y) in zip(ds.cell_ids, ds.coords)
    ]
    expr, coords = write_toy_files(tmp_path, expr_rows, coord_rows)
    cfg = {
        "input": {"expression": expr, "coords": coords},
        "gibbs": {"seed": 11, "iterations": iterations, "burn_in": iterations // 2, "m": 4},
        "output": {"thin": 5},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    return cfg_path


class TestCli:
    def test_fit_deterministic_trees(self, tmp_path):
        cfg = make_fit_config(tmp_path, np.random.default_rng(4))
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert cli_dispatch(["fit", "--config", str(cfg), "--out-dir", str(out1)]) == 0
        assert cli_dispatch(
            ["fit", "--config", str(cfg), "--out-dir", str(out2), "--threads", "4"]
        ) == 0
        assert _hash_tree(out1) == _hash_tree(out2)

    def test_trim_quantile_flag(self, tmp_path, capsys):
        cfg = make_fit_config(tmp_path, np.random.default_rng(40), n_cells=20, iterations=20)
        out = tmp_path / "trimmed"
        code = cli_dispatch(
            ["fit", "--config", str(cfg), "--out-dir", str(out), "--trim-quantile", "0.1"]
        )
        assert code == 0
        assert "trimmed" in capsys.readouterr().err
        with open(out / "manifest.json") as fh:
            assert json.load(fh)["n_cells"][0] < 20

    def test_unknown_subcommand_exits_one(self, capsys):
        assert cli_dispatch(["explode"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag_exits_one(self):
        assert cli_dispatch(["fit", "--config", "x.json", "--bogus"]) == 1

    def test_missing_config_exits_one(self, tmp_path):
        assert cli_dispatch(["fit", "--config", str(tmp_path / "nope.json")]) == 1

    def test_network_high_cutoff_empty_but_ok(self, tmp_path):
        rng = np.random.default_rng(5)
        prec = np.linalg.inv(np.eye(3) + 0.2)
        write_labeled_matrix(tmp_path / "prec.csv", prec, ["g1", "g2", "g3"])
        out = tmp_path / "net"
        code = cli_dispatch(
            ["network", "--precision", str(tmp_path / "prec.csv"), "--cutoff", "1.1",
             "--out-dir", str(out)]
        )
        assert code == 0
        edges = (out / "network_edges.tsv").read_text().strip().splitlines()
        assert edges == ["gene_i\tgene_j\tweight"]

    def test_network_default_cutoff(self, tmp_path):
        prec = np.array([[2.0, -0.8, 0.0], [-0.8, 2.0, 0.0], [0.0, 0.0, 1.0]])
        write_labeled_matrix(tmp_path / "prec.csv", prec, ["a", "b", "c"])
        out = tmp_path / "net"
        assert cli_dispatch(
            ["network", "--precision", str(tmp_path / "prec.csv"), "--out-dir", str(out)]
        ) == 0
        lines = (out / "network_edges.tsv").read_text().strip().splitlines()
        assert len(lines) == 2 and lines[1].startswith("a\tb\t")

    def test_simulate_smoke_table(self, tmp_path):
        cfg = {
            "scenario": {
                "N": 4, "n": 20, "scale_kind": "AR", "rho": 0.5, "replicates": 1,
                "seed": 2, "kernel": {"family": "matern", "variance": 1.0,
                                       "range": 1.0, "smoothness": 0.5},
            },
            "gibbs": {"seed": 0, "iterations": 60, "burn_in": 30, "m": 4},
        }
        cfg_path = tmp_path / "sim.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "sim"
        assert cli_dispatch(["simulate", "--config", str(cfg_path), "--out-dir", str(out)]) == 0
        lines = (out / "scenario_metrics.csv").read_text().strip().splitlines()
        assert lines[0].startswith("replicate,status,kl_n_log")
        assert len(lines) == 4  # header + 1 replicate + mean + sd

    def test_cluster_and_corr_dist_and_report(self, tmp_path):
        cfg = make_fit_config(tmp_path, np.random.default_rng(6))
        fit_out = tmp_path / "fit"
        assert cli_dispatch(["fit", "--config", str(cfg), "--out-dir", str(fit_out)]) == 0

        cl_out = tmp_path / "cl"
        assert cli_dispatch(
            ["cluster", "--similarity", str(fit_out / "col_corr_mean.csv"),
             "--k", "2", "--clusters", "3", "--restarts", "4", "--out-dir", str(cl_out)]
        ) == 0
        labels = (cl_out / "cluster_labels.csv").read_text().strip().splitlines()
        assert len(labels) == 16  # header + 15 cells
        assert (cl_out / "laplacian_eigenvalues.csv").exists()
        assert (cl_out / "wcss_curve.csv").exists()

        cd_out = tmp_path / "cd"
        assert cli_dispatch(
            ["corr-dist", "--similarity", str(fit_out / "col_corr_mean.csv"),
             "--coords", str(tmp_path / "coords.csv"), "--out-dir", str(cd_out)]
        ) == 0
        pairs = (cd_out / "corr_vs_distance.csv").read_text().strip().splitlines()
        assert len(pairs) == 1 + 15 * 14 // 2

        rp_out = tmp_path / "rp"
        assert cli_dispatch(
            ["report", "--trace", str(fit_out / "theta_trace.csv"), "--burn-in", "15",
             "--max-lag", "10", "--out-dir", str(rp_out)]
        ) == 0
        acf = (rp_out / "loglik_acf.csv").read_text().strip().splitlines()
        assert len(acf) == 12  # header + lags 0..10
        assert acf[1].split(",")[1] == "1"

    def test_fit_multi_gene_mismatch_and_intersect(self, tmp_path):
        rng = np.random.default_rng(7)
        pairs = []
        for tag, genes in (("s1", ["gA", "gB", "gC"]), ("s2", ["gB", "gC", "gD"])):
            ds = simulated_dataset(rng, n_genes=3, n_cells=12)
            expr_rows = [["gene"] + ds.cell_ids] + [
                [g] + ["%.17g" % v for v in row] for g, row in zip(genes, ds.expression)
            ]
            coord_rows = [["cell_id", "x", "y"]] + [
                [cid, "%.17g" % x, "%.17g" % y] for cid, (x, y) in zip(ds.cell_ids, ds.coords)
            ]
            expr = tmp_path / f"{tag}_expr.csv"
            coords = tmp_path / f"{tag}_coords.csv"
            expr.write_text("\n".join(",".join(map(str, r)) for r in expr_rows) + "\n")
            coords.write_text("\n".join(",".join(map(str, r)) for r in coord_rows) + "\n")
            pairs.append({"expression": str(expr), "coords": str(coords)})
        cfg = {
            "input": {"samples": pairs},
            "gibbs": {"seed": 1, "iterations": 20, "burn_in": 10, "m": 3},
        }
        cfg_path = tmp_path / "multi.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "m1"
        assert cli_dispatch(["fit-multi", "--config", str(cfg_path), "--out-dir", str(out)]) == 1
        out2 = tmp_path / "m2"
        assert cli_dispatch(
            ["fit-multi", "--config", str(cfg_path), "--out-dir", str(out2), "--intersect-genes"]
        ) == 0
        with open(out2 / "manifest.json") as fh:
            assert json.load(fh)["n_genes"] == 2


class TestNumpyBackendFallback:
    def test_fallback_matches_numba_results(self, tmp_path):
        rng = np.random.default_rng(8)
        ds = simulated_dataset(rng, n_cells=15)
        cfg = GibbsConfig(seed=4, iterations=30, burn_in=15, m=4)
        samples = run_gibbs(ds, cfg)
        script = (
            "import numpy as np, sys, json\n"
            "from spatcov._accel import USING_NUMBA\n"
            "from spatcov.gibbs import GibbsConfig, run_gibbs\n"
            "from spatcov.io import SpatialDataset\n"
            "data = np.load(sys.argv[1])\n"
            "ds = SpatialDataset.from_arrays(data['y'], data['pts'])\n"
            "cfg = GibbsConfig(seed=4, iterations=30, burn_in=15, m=4)\n"
            "s = run_gibbs(ds, cfg)\n"
            "np.savez(sys.argv[2], loglik=s.loglik_trace, theta=s.log_theta_trace,\n"
            "         numba=np.array([USING_NUMBA]))\n"
        )
        npz_in = tmp_path / "in.npz"
        npz_out = tmp_path / "out.npz"
        np.savez(npz_in, y=ds.expression, pts=ds.coords)
        env = dict(os.environ, SPATCOV_BACKEND="numpy")
        subprocess.run(
            [sys.executable, "-c", script, str(npz_in), str(npz_out)],
            check=True, env=env,
        )
        out = np.load(npz_out)
        assert not out["numba"][0]
        assert np.allclose(out["loglik"], samples.loglik_trace, rtol=1e-9, atol=1e-9)
        assert np.allclose(out["theta"], samples.log_theta_trace, rtol=1e-9, atol=1e-9)
