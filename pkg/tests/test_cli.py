import csv
import json
import subprocess
import sys

import pytest

from mixstock import cli
from mixstock.errors import InitializationError

FAST = ["--iterations", "100", "--burnin", "50", "--thin", "5"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_tsv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh, delimiter="\t"))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["simulate", "--scenario", "fst20-8loci", "--seed", "5", "--out",
                     str(root / "data"), "--colony-size", "40", "--loci", "4"]) == 0
    for prior in ("dirichlet-dirichlet", "dirichlet-lognormal", "uniform"):
        assert cli.main(["fit", "--data", str(root / "data"), "--prior", prior, *FAST,
                         "--seed", "2", "--out", str(root / prior)]) == 0
    return root


def test_simulate_writes_bundle_and_echoes_seed(tmp_path, capsys):
    assert run("simulate", "--scenario", "fst05-16loci", "--seed", 17, "--out", tmp_path / "d") == 0
    assert "seed\t17" in capsys.readouterr().out
    for name in ("sources.tsv", "colony.tsv", "covariates.tsv", "truth.json"):
        assert (tmp_path / "d" / name).exists()
    truth = json.loads((tmp_path / "d" / "truth.json").read_text())
    assert truth["fst"] == 0.05 and len(truth["P"]) == 16
    loci = {r[1] for r in read_tsv(tmp_path / "d" / "sources.tsv")[1:]}
    assert len(loci) == 16


def test_simulate_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("simulate", "--seed", 3, "--replicates", 2, "--out", tmp_path / d) == 0
    for rep in ("rep_001", "rep_002"):
        for name in ("sources.tsv", "colony.tsv", "covariates.tsv", "truth.json"):
            assert (tmp_path / "a" / rep / name).read_bytes() == \
                (tmp_path / "b" / rep / name).read_bytes()
    assert (tmp_path / "a" / "rep_001" / "colony.tsv").read_bytes() != \
        (tmp_path / "a" / "rep_002" / "colony.tsv").read_bytes()


def test_fit_retains_expected_draws_and_is_reproducible(workdir, tmp_path):
    rows = read_tsv(workdir / "uniform" / "draws.tsv")
    assert len(rows) == 11
    assert rows[0][0] == "iteration" and rows[0][-1] == "loglik"
    assert run("fit", "--data", workdir / "data", "--prior", "uniform", *FAST, "--seed", 2,
               "--out", tmp_path / "again") == 0
    for name in ("draws.tsv", "run.json"):
        assert (workdir / "uniform" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_run_metadata_is_enough_to_rerun(workdir):
    meta = json.loads((workdir / "dirichlet-dirichlet" / "run.json").read_text())
    assert meta["seed"] == 2 and meta["prior"]["kind"] == "dirichlet-dirichlet"
    assert meta["config"]["iterations"] == 100 and meta["config"]["thin"] == 5
    assert meta["data"]["sources"].endswith("sources.tsv")
    assert set(meta["acceptance"]) >= {"P", "m", "omega"}


def test_defaults_follow_the_reference_run_length():
    d = cli.DEFAULTS["fit"]
    assert (d["iterations"], d["burnin"], d["thin"]) == (30000, 5000, 5)


def test_config_file_and_flag_precedence(workdir, tmp_path):
    cfg = tmp_path / "fit.cfg"
    cfg.write_text("iterations = 60\nburnin = 20\nthin = 4\nprior = uniform\nseed = 1\n")
    assert run("fit", "--config", cfg, "--data", workdir / "data", "--out", tmp_path / "a") == 0
    assert len(read_tsv(tmp_path / "a" / "draws.tsv")) == 11
    assert run("fit", "--config", cfg, "--thin", 2, "--data", workdir / "data",
               "--out", tmp_path / "b") == 0
    assert len(read_tsv(tmp_path / "b" / "draws.tsv")) == 21


@pytest.mark.parametrize("argv", [
    ["fit", "--prior", "flat"],
    ["fit", "--iterations", "10", "--burnin", "50"],
    ["fit", "--iterations", "ten"],
    ["simulate", "--scenario", "fst99-1locus"],
    ["simulate"],
    ["summarize"],
    ["frobnicate"],
    [],
])
def test_usage_and_validation_errors_exit_1(workdir, tmp_path, argv):
    extra = []
    if argv and argv[0] == "fit":
        extra = ["--data", str(workdir / "data"), "--out", str(tmp_path / "x")]
    if argv[:1] == ["simulate"] and len(argv) > 1:
        extra = ["--out", str(tmp_path / "x")]
    assert cli.main(argv + extra) == 1
    assert not (tmp_path / "x" / "draws.tsv").exists()


def test_unknown_config_key_is_rejected_before_compute(workdir, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("iterations = 100\nwarmup = 10\n")
    assert run("fit", "--config", cfg, "--data", workdir / "data", "--out", tmp_path / "x") == 1
    assert not (tmp_path / "x").exists()


def test_covariate_prior_needs_covariates(workdir, tmp_path):
    d = workdir / "data"
    assert run("fit", "--sources", d / "sources.tsv", "--colony", d / "colony.tsv",
               "--prior", "dirichlet-dirichlet", *FAST, "--out", tmp_path / "x") == 1
    assert run("fit", "--sources", d / "sources.tsv", "--colony", d / "colony.tsv",
               "--prior", "uniform", *FAST, "--out", tmp_path / "y") == 0


def test_runtime_failure_exits_2(workdir, tmp_path, monkeypatch, capsys):
    import mixstock.sampler as sampler

    def boom(*a, **k):
        raise InitializationError("posterior is not finite at the initial state")

    monkeypatch.setattr(sampler, "run_chain", boom)
    assert run("fit", "--data", workdir / "data", *FAST, "--out", tmp_path / "x") == 2
    assert "not finite" in capsys.readouterr().err


def test_summarize_models_table(workdir, tmp_path, capsys):
    chains = [workdir / p for p in ("dirichlet-dirichlet", "dirichlet-lognormal", "uniform")]
    assert run("summarize", *chains, "--out", tmp_path / "s") == 0
    header = capsys.readouterr().out.splitlines()[0].split("\t")
    assert header[:3] == ["parameter", "dirichlet-dirichlet Mean", "dirichlet-dirichlet 95% HPD"]
    assert len(header) == 7
    for name in ("summary.tsv", "summary_long.tsv", "posterior_densities.png",
                 "trace_uniform.png"):
        assert (tmp_path / "s" / name).stat().st_size > 0


def test_summarize_with_truth_adds_rmse(workdir, tmp_path):
    assert run("summarize", workdir / "uniform", "--truth", workdir / "data" / "truth.json",
               "--out", tmp_path / "s") == 0
    rows = read_tsv(tmp_path / "s" / "summary_long.tsv")
    head = rows[0]
    m1 = dict(zip(head, next(r for r in rows if r[1] == "m[1]")))
    assert m1["rmse"] and m1["truth"]
    rmse, sd, mean, truth = (float(m1[k]) for k in ("rmse", "sd", "mean", "truth"))
    assert rmse**2 == pytest.approx(sd**2 + (mean - truth) ** 2, rel=1e-12)


def test_summarize_replicates_table(workdir, tmp_path, capsys):
    chains = [workdir / "dirichlet-dirichlet", workdir / "dirichlet-lognormal"]
    assert run("summarize", *chains, "--truth", workdir / "data" / "truth.json",
               "--mode", "replicates", "--out", tmp_path / "r") == 0
    rows = [r.split("\t") for r in capsys.readouterr().out.splitlines()]
    assert rows[0] == ["parameter", "TRUE", "statistic", "dirichlet-dirichlet",
                       "dirichlet-lognormal"]
    assert [r[2] for r in rows[1:5]] == ["mean", "sd", "rmse", "hpd_length"]
    assert (tmp_path / "r" / "study.png").exists()


def test_summarize_empty_chain_fails(workdir, tmp_path):
    import shutil

    shutil.copytree(workdir / "uniform", tmp_path / "empty")
    draws = tmp_path / "empty" / "draws.tsv"
    draws.write_text(draws.read_text().splitlines()[0] + "\n")
    assert run("summarize", tmp_path / "empty") == 1


def test_compare_tables(workdir, tmp_path, capsys):
    assert run("compare", workdir / "uniform", "--data", workdir / "data") == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0].split("\t") == ["Model", "Dbar", "pD", "DIC", "LPML"] and len(rows) == 2
    chains = [workdir / p for p in ("dirichlet-dirichlet", "dirichlet-lognormal", "uniform")]
    assert run("compare", *chains, "--data", workdir / "data", "--out", tmp_path / "c") == 0
    rows = read_tsv(tmp_path / "c" / "scores_long.tsv")
    assert len(rows) == 4
    for r in rows[1:]:
        d = dict(zip(rows[0], r))
        assert abs(float(d["dic"]) - float(d["dbar"]) - float(d["pd"])) < 1e-9
    assert (tmp_path / "c" / "scores.png").exists()


def test_compare_rejects_mismatched_data(workdir, tmp_path, capsys):
    assert run("simulate", "--scenario", "fst20-8loci", "--seed", 6, "--out", tmp_path / "other",
               "--colony-size", 40, "--loci", 4) == 0
    assert run("compare", workdir / "uniform", "--data", tmp_path / "other") == 1
    assert "different data" in capsys.readouterr().err


def test_study_command(tmp_path, capsys):
    assert run("study", "--scenario", "fst20-8loci", "--replicates", 1, "--iterations", 60,
               "--burnin", 20, "--thin", 4, "--prior", "uniform", "--out", tmp_path / "st") == 0
    assert capsys.readouterr().out.startswith("parameter\tTRUE\tstatistic\tuniform")
    for name in ("study.tsv", "study_long.tsv", "study.json", "study.png"):
        assert (tmp_path / "st" / name).exists()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "mixstock", "simulate", "--out",
                          str(tmp_path / "d"), "--seed", "1"], capture_output=True, text=True)
    assert res.returncode == 0 and "seed\t1" in res.stdout
    res = subprocess.run([sys.executable, "-m", "mixstock", "fit", "--bogus"],
                         capture_output=True, text=True)
    assert res.returncode == 1
