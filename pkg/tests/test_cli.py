import json

import pytest

from markovmix import io as mio
from markovmix.cli import (
    EXIT_INVALID,
    EXIT_MISMATCH,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    main,
)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--model", "benchmark", "--n-paths", "600", "--horizon", "100",
                 "--seed", "3", "--labeled", "--out", str(d / "lab.jsonl"), "--workers", "1"]) == 0
    assert main(["simulate", "--model", "benchmark", "--n-paths", "600", "--horizon", "100",
                 "--seed", "3", "--out", str(d / "hid.jsonl"), "--workers", "1"]) == 0
    return d


class TestSimulate:
    def test_summary(self, tmp_path, capsys):
        out = tmp_path / "d.jsonl"
        code = main(["simulate", "--model", "benchmark", "--n-paths", "50", "--horizon", "10",
                     "--seed", "1", "--labeled", "--out", str(out)])
        text = capsys.readouterr().out
        assert code == EXIT_OK
        assert "N = 50, T = 10" in text and "regime counts" in text and "initial-state frequencies" in text
        assert len(out.read_text().splitlines()) == 50

    def test_zero_paths_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["simulate", "--model", "benchmark", "--n-paths", "0", "--horizon", "10",
                  "--out", str(tmp_path / "d.jsonl")])
        assert err.value.code == 2

    def test_repeatable(self, tmp_path):
        args = ["simulate", "--model", "benchmark", "--n-paths", "40", "--horizon", "20", "--seed", "9"]
        main(args + ["--out", str(tmp_path / "a.jsonl")])
        main(args + ["--out", str(tmp_path / "b.jsonl"), "--workers", "2"])
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_model_file(self, truth, tmp_path):
        mio.write_model(tmp_path / "m.json", truth)
        assert main(["simulate", "--model", str(tmp_path / "m.json"), "--n-paths", "5", "--horizon", "1",
                     "--out", str(tmp_path / "d.jsonl")]) == EXIT_OK

    def test_invalid_model(self, tmp_path, capsys):
        (tmp_path / "m.json").write_text('{"p": 2, "M": 1, "pi": [0.5, 0.6], "regimes": [{"Q": [[0, 1], [1, 0]]}], "s": [[1], [1]]}')
        code = main(["simulate", "--model", str(tmp_path / "m.json"), "--n-paths", "5", "--horizon", "1",
                     "--out", str(tmp_path / "d.jsonl")])
        assert code == EXIT_INVALID
        assert "error" in capsys.readouterr().err


class TestFit:
    def test_mle(self, workdir, capsys):
        out = workdir / "mle.json"
        assert main(["fit", str(workdir / "lab.jsonl"), "--method", "mle", "--out", str(out)]) == EXIT_OK
        text = capsys.readouterr().out
        assert "q_i^(1)" in text and "s_i^(2)" in text and "Pi^(2) =" in text
        assert mio.read_fit(out).method == "mle-complete"

    def test_mle_needs_labels(self, workdir):
        assert main(["fit", str(workdir / "hid.jsonl"), "--method", "mle"]) == EXIT_INVALID

    def test_em_ignores_labels(self, workdir):
        a, b = workdir / "a.json", workdir / "b.json"
        main(["fit", str(workdir / "lab.jsonl"), "--method", "em", "--out", str(a)])
        main(["fit", str(workdir / "hid.jsonl"), "--method", "em", "--out", str(b)])
        assert mio.read_fit(a).model == mio.read_fit(b).model

    def test_em_restricted_table(self, workdir, capsys):
        code = main(["fit", str(workdir / "hid.jsonl"), "--method", "em-restricted", "--out", str(workdir / "r.json")])
        assert code == EXIT_OK
        assert "Psi^(1) = diag(" in capsys.readouterr().out

    def test_not_converged(self, workdir):
        out = workdir / "nc.json"
        code = main(["fit", str(workdir / "hid.jsonl"), "--method", "em", "--max-iter", "2", "--out", str(out),
                     "--trace", str(workdir / "nc.tsv")])
        assert code == EXIT_NOT_CONVERGED
        assert mio.read_fit(out).converged is False
        assert len((workdir / "nc.tsv").read_text().splitlines()) == 3

    def test_init_file(self, workdir, truth):
        mio.write_model(workdir / "init.json", truth)
        assert main(["fit", str(workdir / "hid.jsonl"), "--method", "em", "--init", str(workdir / "init.json")]) == 0

    def test_markov(self, workdir):
        out = workdir / "mk.json"
        assert main(["fit", str(workdir / "hid.jsonl"), "--method", "markov", "--out", str(out)]) == EXIT_OK
        assert mio.read_fit(out).model.M == 1

    def test_bad_dataset(self, tmp_path):
        (tmp_path / "d.jsonl").write_text('{"id": 0}\n')
        assert main(["fit", str(tmp_path / "d.jsonl"), "--method", "markov"]) == EXIT_INVALID


class TestTest:
    def test_markov_vs_em(self, workdir, capsys):
        data = str(workdir / "hid.jsonl")
        main(["fit", data, "--method", "markov", "--out", str(workdir / "mk.json")])
        main(["fit", data, "--method", "em", "--out", str(workdir / "em.json")])
        capsys.readouterr()
        code = main(["test", data, str(workdir / "mk.json"), str(workdir / "em.json"), "--out", str(workdir / "t.json")])
        assert code == EXIT_OK
        assert "dof             9" in capsys.readouterr().out
        assert json.loads((workdir / "t.json").read_text())["dof"] == 9

    def test_self(self, workdir, capsys):
        data = str(workdir / "hid.jsonl")
        main(["fit", data, "--method", "em", "--out", str(workdir / "em.json")])
        capsys.readouterr()
        assert main(["test", data, str(workdir / "em.json"), str(workdir / "em.json")]) == EXIT_OK
        text = capsys.readouterr().out
        assert "-2 ln Lambda    0.0000e+00" in text and "p-value         1" in text

    def test_mismatched(self, workdir, tmp_path):
        main(["fit", str(workdir / "hid.jsonl"), "--method", "markov", "--out", str(tmp_path / "mk.json")])
        main(["fit", str(workdir / "hid.jsonl"), "--method", "em", "--out", str(tmp_path / "em.json")])
        main(["simulate", "--model", "benchmark", "--n-paths", "600", "--horizon", "100", "--seed", "4",
              "--out", str(tmp_path / "other.jsonl")])
        code = main(["test", str(tmp_path / "other.jsonl"), str(tmp_path / "mk.json"), str(tmp_path / "em.json")])
        assert code == EXIT_MISMATCH


class TestReproduce:
    def test_bundle(self, tmp_path):
        args = ["reproduce", "--n-paths", "400", "--horizon", "50", "--seed", "2", "--workers", "1"]
        assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
        a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
        assert a == b
        for rel in a:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
        names = {str(p) for p in a}
        for want in ("model.json", "dataset.jsonl", "table1_truth.txt", "table2_em.txt", "table3_em_restricted.txt",
                     "test_markov_vs_em.txt", "test_restricted_vs_unrestricted.json", "summary.txt"):
            assert want in names
        assert len([n for n in names if n.startswith("paths/")]) == 5

    def test_path_coordinates(self, tmp_path):
        main(["reproduce", "--n-paths", "50", "--horizon", "20", "--seed", "2", "--paths-figure", "3",
              "--out", str(tmp_path), "--workers", "1"])
        files = sorted((tmp_path / "paths").iterdir())
        assert len(files) == 3
        rows = files[0].read_text().splitlines()
        assert rows[1] == "time\tstate"
        times = [float(r.split("\t")[0]) for r in rows[2:]]
        assert times[0] == 0.0 and times[-1] == 20.0
        assert times == sorted(times)
