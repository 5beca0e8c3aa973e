import json

import numpy as np
import pytest

from mixstock.errors import ConfigError, DataError
from mixstock.io import (bundle_from_arrays, load_bundle, load_bundle_dir, read_chain,
                         read_config, read_truth, write_bundle, write_chain, write_truth)
from mixstock.priors import PriorSpec
from mixstock.sampler import ChainConfig, run_chain
from mixstock.simulate import SimulationConfig, simulate_dataset


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def files(tmp_path):
    s = write(tmp_path / "s.tsv", "source\tlocus\tallele\tcount\n"
              "A\tL1\t120\t3\nA\tL1\t124\t1\nB\tL1\t120\t0\nB\tL1\t124\t5\n"
              "A\tL2\tx\t2\nB\tL2\tx\t2\nB\tL2\ty\t1\n")
    c = write(tmp_path / "c.tsv", "individual\tlocus\tallele1\tallele2\n"
              "k1\tL1\t124\t120\nk1\tL2\tx\ty\nk2\tL1\t120\t120\n")
    g = write(tmp_path / "g.tsv", "source\tcovariate\tvalue\nA\tdist\t1.5\nB\tdist\t-0.5\n")
    return s, c, g


def test_load_small_bundle(files):
    b = load_bundle(*files)
    assert b.source_names == ["A", "B"] and b.locus_names == ["L1", "L2"]
    assert b.allele_labels == [["120", "124"], ["x", "y"]]
    assert b.counts.counts[0].tolist() == [[3, 1], [0, 5]]
    assert b.counts.counts[1].tolist() == [[2, 0], [2, 1]]
    assert b.genotypes.alleles[0].tolist() == [[0, 1], [0, 1]]
    assert b.genotypes.alleles[1].tolist() == [[0, 0], [-1, -1]]
    assert b.covariates.raw.tolist() == [[1.5, -0.5]]


def test_unseen_colony_allele_is_padded(files, tmp_path):
    s, c, g = files
    c2 = write(tmp_path / "c2.tsv", c.read_text() + "k3\tL2\tz\tx\n")
    with pytest.warns(UserWarning, match="not seen"):
        b = load_bundle(s, c2, g)
    assert b.allele_labels[1] == ["x", "y", "z"]
    assert b.counts.n_alleles == (2, 3)
    assert b.counts.counts[1, :, 2].tolist() == [0, 0]


def test_unknown_colony_locus_names_the_locus(files, tmp_path):
    s, c, g = files
    c2 = write(tmp_path / "c2.tsv", c.read_text() + "k3\tL9\tx\tx\n")
    with pytest.raises(DataError, match="L9"):
        load_bundle(s, c2, g)


def test_source_locus_missing_from_colony(files, tmp_path):
    s, _, g = files
    c2 = write(tmp_path / "c2.tsv", "individual\tlocus\tallele1\tallele2\nk1\tL1\t120\t124\n")
    with pytest.raises(DataError, match="L2"):
        load_bundle(s, c2, g)


@pytest.mark.parametrize("row,msg", [("A\tL1\t120\tthree", "not an integer"),
                                     ("A\tL1\t120\t-1", "negative"),
                                     ("A\tL1\t120", "expected 4 fields"),
                                     ("A\tL1\t120\t3", "duplicate")])
def test_malformed_source_rows_report_line(files, tmp_path, row, msg):
    s, c, g = files
    bad = write(tmp_path / "bad.tsv", s.read_text() + row + "\n")
    with pytest.raises(DataError, match=f"bad.tsv:9: .*{msg}"):
        load_bundle(bad, c, g)


def test_bad_header(files, tmp_path):
    _, c, g = files
    bad = write(tmp_path / "bad.tsv", "pop\tlocus\tallele\tcount\nA\tL1\t1\t2\n")
    with pytest.raises(DataError, match="header"):
        load_bundle(bad, c, g)


def test_covariates_must_cover_sources(files, tmp_path):
    s, c, _ = files
    g = write(tmp_path / "g.tsv", "source\tcovariate\tvalue\nA\tdist\t1.5\n")
    with pytest.raises(DataError, match="'B'"):
        load_bundle(s, c, g)
    g = write(tmp_path / "g2.tsv", "source\tcovariate\tvalue\nA\tdist\t1\nC\tdist\t2\n")
    with pytest.raises(DataError, match="unknown source"):
        load_bundle(s, c, g)


@pytest.mark.parametrize("text", ["", "source\tcovariate\tvalue\n"])
def test_empty_covariate_file_is_accepted(files, tmp_path, text):
    s, c, _ = files
    b = load_bundle(s, c, write(tmp_path / "g.tsv", text))
    assert b.covariates.n_covariates == 0
    ch = run_chain(b.genotypes, b.counts, b.covariates, PriorSpec("uniform"),
                   ChainConfig(iterations=20, burnin=10, thin=1))
    assert len(ch) == 10


def test_seven_source_eight_locus_bundle_round_trips(tmp_path):
    d = simulate_dataset(SimulationConfig.scenario("fst05-8loci", seed=3))
    b = bundle_from_arrays(d.counts, d.genotypes, d.covariates)
    write_bundle(b, tmp_path / "bundle")
    back = load_bundle_dir(tmp_path / "bundle")
    assert back.n_sources == 7 and back.n_loci == 8
    assert np.array_equal(back.counts.counts, d.counts.counts)
    assert np.array_equal(back.genotypes.alleles, d.genotypes.alleles)
    assert np.array_equal(back.covariates.raw, d.covariates.raw)
    assert back.source_names == b.source_names and back.allele_labels == b.allele_labels
    # a second write of the reloaded bundle is byte-identical
    write_bundle(back, tmp_path / "again")
    for name in ("sources.tsv", "colony.tsv", "covariates.tsv"):
        assert (tmp_path / "bundle" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_truth_sidecar(tmp_path, small_data):
    write_truth(small_data, tmp_path / "truth.json", seed=11)
    t = read_truth(tmp_path / "truth.json")
    assert t == small_data.truth()
    assert json.loads((tmp_path / "truth.json").read_text())["seed"] == 11


def test_chain_round_trip(tmp_path, small_data):
    d = small_data
    ch = run_chain(d.genotypes, d.counts, d.covariates, PriorSpec("dirichlet-lognormal"),
                   ChainConfig(iterations=60, burnin=20, thin=4, seed=9))
    write_chain(ch, tmp_path / "run")
    back = read_chain(tmp_path / "run")
    assert back.names == ch.names
    assert np.array_equal(back.draws, ch.draws)
    assert np.array_equal(back.loglik, ch.loglik)
    assert np.array_equal(back.iterations, ch.iterations)
    assert back.prior == ch.prior and back.config == ch.config
    assert back.meta["data_hash"] == ch.meta["data_hash"]


def test_empty_and_truncated_chains(tmp_path, small_data):
    d = small_data
    ch = run_chain(d.genotypes, d.counts, None, PriorSpec("uniform"),
                   ChainConfig(iterations=30, burnin=10, thin=2))
    write_chain(ch, tmp_path / "run")
    draws = tmp_path / "run" / "draws.tsv"
    lines = draws.read_text().splitlines()
    draws.write_text(lines[0] + "\n")
    with pytest.raises(DataError, match="no draws"):
        read_chain(tmp_path / "run")
    draws.write_text("\n".join(lines[:5]) + "\n")
    with pytest.raises(DataError, match="expects 10 draws"):
        read_chain(tmp_path / "run")


def test_config_file(tmp_path):
    cfg = write(tmp_path / "run.cfg", "# comment\niterations = 100\nprior=uniform  # inline\n\n")
    assert read_config(cfg) == {"iterations": "100", "prior": "uniform"}
    with pytest.raises(ConfigError, match="duplicate"):
        read_config(write(tmp_path / "d.cfg", "a=1\na=2\n"))
    with pytest.raises(ConfigError, match="key = value"):
        read_config(write(tmp_path / "e.cfg", "just text\n"))
