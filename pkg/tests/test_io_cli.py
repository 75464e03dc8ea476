import io
import json
import math

import numpy as np
import pytest

from permexp.cli import main
from permexp.io import (
    LotteryData,
    format_json_report,
    load_lottery_csv,
    load_permutation_csv,
    save_draws_csv,
    save_permutation_csv,
    write_grid_csv,
)
from permexp.perm import Permutation

from conftest import random_permutation


class TestPermutationCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        pi = random_permutation(rng, 37)
        path = tmp_path / "pi.csv"
        save_permutation_csv(pi, path)
        assert load_permutation_csv(path) == pi

    def test_rows_any_order(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("i,pi\n2,3\n1,1\n3,2\n")
        assert load_permutation_csv(path) == Permutation([1, 3, 2])

    def test_header_validated(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("a,b\n1,1\n")
        with pytest.raises(ValueError):
            load_permutation_csv(path)

    def test_non_bijection_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("i,pi\n1,2\n2,2\n")
        with pytest.raises(ValueError):
            load_permutation_csv(path)

    def test_duplicate_index_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("i,pi\n1,1\n1,2\n")
        with pytest.raises(ValueError):
            load_permutation_csv(path)


class TestLotteryCsv:
    def test_loads_bundled(self, lottery):
        assert lottery.pi().n == 366
        # September 14 (day 258 of a leap year) drew number 1
        assert lottery.draw_order[257] == 1
        assert lottery.pi()(1) == 258

    def test_tau_reflects_pi(self, lottery):
        assert np.array_equal(lottery.tau().values, 367 - lottery.pi().values)

    def test_row_count_enforced(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("day_of_year,draw_order\n1,1\n2,2\n")
        with pytest.raises(ValueError):
            load_lottery_csv(path)

    def test_bijectivity_enforced(self, tmp_path):
        rows = "\n".join(f"{d},{d}" for d in range(1, 366 + 1))
        rows = rows.replace("5,5", "5,4", 1)  # duplicate draw number 4
        path = tmp_path / "l.csv"
        path.write_text("day_of_year,draw_order\n" + rows + "\n")
        with pytest.raises(ValueError):
            load_lottery_csv(path)


class TestGridCsv:
    def test_format(self):
        buf = io.StringIO()
        write_grid_csv(np.array([[1.0, 0.5], [0.25, 2.0 / 3.0]]), buf)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0] == "2"
        assert lines[1] == "1,0.5"
        assert lines[2].split(",")[1] == "0.6666666667"


class TestDrawsCsv:
    def test_format(self):
        buf = io.StringIO()
        save_draws_csv([Permutation([2, 1]), Permutation([1, 2])], buf)
        assert buf.getvalue() == (
            "draw,i,pi\n1,1,2\n1,2,1\n2,1,1\n2,2,2\n"
        )


class TestJsonFormatting:
    def test_ten_significant_digits(self):
        out = format_json_report({"x": 1.0 / 3.0, "nested": {"y": 2.0 / 3.0}})
        data = json.loads(out)
        assert data["x"] == 0.3333333333
        assert data["nested"]["y"] == 0.6666666667


class TestCliFit:
    @pytest.fixture()
    def tau_csv(self, tmp_path, lottery):
        path = tmp_path / "tau.csv"
        save_permutation_csv(lottery.tau(), path)
        return str(path)

    def test_pl_on_lottery(self, tau_csv, capsys):
        code = main(["fit", "--model", "linear", "--f", "xy", "--method", "pl",
                     "--data", tau_csv])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["method"] == "PL"
        assert abs(out["theta_hat"] - 2.92) <= 0.01

    def test_ld_small_grid(self, tau_csv, capsys):
        code = main(["fit", "--model", "linear", "--f", "xy", "--method", "ld",
                     "--data", tau_csv, "--k", "100", "--root-tol", "1e-4"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["method"] == "LD" and out["k"] == 100
        # the k=100 grid is coarse; the k=1000 acceptance run pins 2.96
        assert abs(out["theta_hat"] - 2.96) <= 1.0

    def test_no_root_exit_code(self, tmp_path, capsys):
        path = tmp_path / "id.csv"
        save_permutation_csv(Permutation.identity(12), path)
        code = main(["fit", "--method", "pl", "--data", str(path)])
        assert code == 2
        out = json.loads(capsys.readouterr().out)
        assert out["error"] == "no_root" and out["sign"] == "positive"

    def test_kendall_pl_incompatible(self, tau_csv, capsys):
        code = main(["fit", "--model", "kendall", "--method", "pl",
                     "--data", tau_csv])
        assert code == 1

    def test_kendall_ld(self, tau_csv, capsys):
        code = main(["fit", "--model", "kendall", "--method", "ld",
                     "--data", tau_csv])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["method"] == "Kendall-LD"
        assert out["theta_hat"] < 0  # tau has fewer inversions than uniform

    def test_missing_file(self, capsys):
        assert main(["fit", "--method", "pl", "--data", "/nonexistent.csv"]) == 1

    def test_multi_required_for_several_files(self, tau_csv):
        assert main(["fit", "--method", "pl", "--data", tau_csv,
                     "--data", tau_csv]) == 1

    def test_multi_single_file_matches_plain(self, tau_csv, capsys):
        main(["fit", "--method", "pl", "--data", tau_csv])
        single = json.loads(capsys.readouterr().out)
        main(["fit", "--method", "pl", "--data", tau_csv, "--multi"])
        pooled = json.loads(capsys.readouterr().out)
        assert single["theta_hat"] == pooled["theta_hat"]

    def test_multi_pools_two_files(self, tmp_path, capsys):
        from permexp.mcmc import sample
        from permexp.models import LinearModel
        from permexp.grids import get_score

        f = get_score("xy")
        draws = sample(LinearModel(f, 2.0, 80), 2, burn=60, thin=5,
                       sampler="auxiliary", seed=33)
        paths = []
        for i, d in enumerate(draws):
            path = tmp_path / f"d{i}.csv"
            save_permutation_csv(d, path)
            paths.append(str(path))
        code = main(["fit", "--method", "pl", "--data", paths[0],
                     "--data", paths[1], "--multi"])
        assert code == 0
        pooled = json.loads(capsys.readouterr().out)
        from permexp.estimators import multi_estimate
        want = multi_estimate(draws, f, "pl")
        assert pooled["theta_hat"] == pytest.approx(want.theta_hat, abs=1e-9)


class TestCliLogz:
    def test_curve(self, tmp_path):
        out = tmp_path / "curve.csv"
        code = main(["logz", "--f", "xy", "--theta-min", "-6", "--theta-max", "6",
                     "--steps", "7", "--k", "40", "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "theta,w_k,w_k_prime,status"
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 7
        mid = rows[3]
        assert float(mid[0]) == 0.0 and abs(float(mid[1])) < 1e-12
        primes = [float(r[2]) for r in rows]
        assert all(a < b for a, b in zip(primes, primes[1:]))
        assert all(r[3] == "ok" for r in rows)

    def test_iteration_capped_rows_flagged(self, tmp_path):
        out = tmp_path / "curve.csv"
        code = main(["logz", "--f", "xy", "--theta-min", "-500", "--theta-max",
                     "500", "--steps", "3", "--k", "30", "--iters", "5",
                     "--out", str(out)])
        assert code == 0
        rows = [line.split(",") for line in out.read_text().strip().split("\n")[1:]]
        assert rows[0][3] == "maxiter" and rows[2][3] == "maxiter"
        assert rows[1][3] == "ok"


class TestCliDensity:
    def test_theta_zero_flat(self, tmp_path):
        out = tmp_path / "d.csv"
        assert main(["density", "--f", "xy", "--theta", "0", "--k", "8",
                     "--out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "8"
        vals = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        assert np.abs(vals - 1.0).max() <= 1e-10

    def test_kendall_density_margins(self, tmp_path):
        out = tmp_path / "d.csv"
        assert main(["density", "--model", "kendall", "--theta", "2", "--k",
                     "400", "--out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        vals = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        assert np.abs(vals.mean(axis=0) - 1).max() <= 1e-4

    def test_spearman_density_peaks_on_diagonal(self, tmp_path):
        out = tmp_path / "d.csv"
        assert main(["density", "--f", "xy", "--theta", "20", "--k", "60",
                     "--out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        vals = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        assert np.abs(vals - vals.T).max() <= 1e-8
        assert np.abs(vals - vals[::-1, ::-1].T).max() <= 1e-8
        assert vals.diagonal().max() == vals.max()


class TestCliSample:
    def test_deterministic_output(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        args = ["sample", "--model", "kendall", "--theta", "1.5", "--n", "12",
                "--draws", "3", "--burn", "500", "--thin", "100", "--seed", "9"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_text() == b.read_text()

    def test_mismatch_exit_code(self, tmp_path):
        code = main(["sample", "--model", "kendall", "--theta", "1", "--n", "8",
                     "--sampler", "aux", "--out", str(tmp_path / "x.csv")])
        assert code == 1

    def test_hist_grid_tracks_density(self, tmp_path):
        out = tmp_path / "draws.csv"
        hist = tmp_path / "hist.csv"
        code = main(["sample", "--f", "xy", "--theta", "20", "--n", "10000",
                     "--draws", "1", "--burn", "10", "--sampler", "aux",
                     "--seed", "4", "--hist", "10", "--out", str(out),
                     "--hist-out", str(hist)])
        assert code == 0
        dens = tmp_path / "limit.csv"
        assert main(["density", "--f", "xy", "--theta", "20", "--k", "10",
                     "--out", str(dens)]) == 0
        h = np.array([[float(v) for v in line.split(",")]
                      for line in hist.read_text().strip().split("\n")[1:]])
        d = np.array([[float(v) for v in line.split(",")]
                      for line in dens.read_text().strip().split("\n")[1:]])
        corr = np.corrcoef(h.ravel(), d.ravel())[0, 1]
        assert corr > 0.9

    def test_hist_needs_path_with_stdout(self, capsys):
        code = main(["sample", "--f", "xy", "--theta", "1", "--n", "6",
                     "--draws", "1", "--burn", "10", "--thin", "5",
                     "--hist", "2"])
        capsys.readouterr()
        assert code == 1


class TestCliLottery:
    def test_full_report(self, lottery_path, capsys):
        code = main(["lottery", "--data", str(lottery_path), "--k", "300",
                     "--iters", "200", "--root-tol", "1e-4", "--seed", "1"])
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["n"] == 366
        assert rep["statistic"] == 0.2701750244
        assert abs(rep["spearman_r"] + 0.226) <= 0.001
        assert abs(rep["uniformity"]["z"] - 4.31) < 0.01
        assert abs(rep["pl"]["theta_hat"] - 2.92) <= 0.01
        assert abs(rep["ld"]["theta_hat"] - 2.96) <= 0.5  # k=300 grid
        tau_bins = np.array(rep["tau_bins"])
        ref_bins = np.array(rep["reference_bins"])
        assert tau_bins.shape == (10, 10) and tau_bins.sum() == 366
        assert ref_bins.shape == (10, 10) and ref_bins.sum() == 366
        # tau is identity-biased: its grid is further from flat than uniform's
        flat = 366 / 100
        assert ((tau_bins - flat) ** 2).sum() > ((ref_bins - flat) ** 2).sum()

    def test_shuffled_data_looks_null(self, tmp_path, capsys):
        rng = np.random.default_rng(123)
        days = np.arange(1, 367)
        order = rng.permutation(366) + 1
        path = tmp_path / "fake.csv"
        with open(path, "w") as fh:
            fh.write("day_of_year,draw_order\n")
            for d, o in zip(days, order):
                fh.write(f"{d},{o}\n")
        code = main(["lottery", "--data", str(path), "--k", "50",
                     "--iters", "100", "--root-tol", "1e-3"])
        rep = json.loads(capsys.readouterr().out)
        assert code in (0, 2)
        assert abs(rep["uniformity"]["z"]) < 4
