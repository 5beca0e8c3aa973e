"""Tab-separated data files, chain output files and flat config files.

Data bundle (one header line each, tab-delimited):

``sources.tsv``    ``source  locus  allele  count``
``colony.tsv``     ``individual  locus  allele1  allele2`` (missing loci omitted)
``covariates.tsv`` ``source  covariate  value``

Sources, loci and alleles are indexed by order of first appearance in the
source file. Colony alleles never seen in any source are appended to their
locus with zero counts.

A fitted chain is a directory holding ``draws.tsv`` (iteration, every
parameter, log-likelihood) and ``run.json`` (seed, configuration, acceptance
rates, data fingerprint).
"""

from __future__ import annotations

import csv
import json
import logging
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .genetics import AlleleCountTable, GenotypeTable
from .priors import CovariateMatrix, PriorSpec

log = logging.getLogger(__name__)

SOURCES_FILE = "sources.tsv"
COLONY_FILE = "colony.tsv"
COVARIATES_FILE = "covariates.tsv"
TRUTH_FILE = "truth.json"
DRAWS_FILE = "draws.tsv"
RUN_FILE = "run.json"

SOURCES_HEADER = ["source", "locus", "allele", "count"]
COLONY_HEADER = ["individual", "locus", "allele1", "allele2"]
COVARIATES_HEADER = ["source", "covariate", "value"]


@dataclass
class DataBundle:
    counts: AlleleCountTable
    genotypes: GenotypeTable
    covariates: CovariateMatrix | None
    source_names: list
    locus_names: list
    allele_labels: list
    individual_ids: list
    paths: dict = field(default_factory=dict)

    @property
    def n_sources(self):
        return len(self.source_names)

    @property
    def n_loci(self):
        return len(self.locus_names)


def _rows(path, header):
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open: {exc.strerror}", path) from exc
    with fh:
        reader = csv.reader(fh, delimiter="\t")
        first = next(reader, None)
        if first is None:
            raise DataError("empty file (header line required)", path, 1)
        if [c.strip() for c in first] != header:
            raise DataError(f"expected header {'/'.join(header)}, got {'/'.join(first)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            yield lineno, [c.strip() for c in row]


def _index(registry, key):
    if key not in registry:
        registry[key] = len(registry)
    return registry[key]


def load_bundle(sources, colony, covariates=None):
    """Parse and cross-validate the three data files."""
    src_idx, loc_idx = {}, {}
    allele_idx = []
    raw = {}
    for lineno, (s, l, a, c) in _rows(sources, SOURCES_HEADER):
        try:
            count = int(c)
        except ValueError:
            raise DataError(f"count {c!r} is not an integer", sources, lineno) from None
        if count < 0:
            raise DataError("negative allele count", sources, lineno)
        si = _index(src_idx, s)
        li = _index(loc_idx, l)
        if li == len(allele_idx):
            allele_idx.append({})
        ai = _index(allele_idx[li], a)
        if (si, li, ai) in raw:
            raise DataError(f"duplicate row for source {s}, locus {l}, allele {a}", sources, lineno)
        raw[(si, li, ai)] = count
    if not src_idx:
        raise DataError("no source rows", sources)

    geno_rows = {}
    ind_idx = {}
    for lineno, (k, l, a1, a2) in _rows(colony, COLONY_HEADER):
        if l not in loc_idx:
            raise DataError(f"locus {l!r} does not appear in the source data", colony, lineno)
        li = loc_idx[l]
        ki = _index(ind_idx, k)
        if (ki, li) in geno_rows:
            raise DataError(f"duplicate genotype for individual {k} at locus {l}", colony, lineno)
        pair = []
        for a in (a1, a2):
            if a not in allele_idx[li]:
                warnings.warn(f"{colony}:{lineno}: allele {a!r} at locus {l!r} not seen in any "
                              f"source; padding with zero counts", stacklevel=2)
                _index(allele_idx[li], a)
            pair.append(allele_idx[li][a])
        geno_rows[(ki, li)] = pair
    seen_loci = {li for (_, li) in geno_rows}
    for name, li in loc_idx.items():
        if li not in seen_loci:
            raise DataError(f"locus {name!r} has source counts but no colony genotypes", colony)

    I, L, K = len(src_idx), len(loc_idx), len(ind_idx)
    n_alleles = tuple(len(d) for d in allele_idx)
    counts = np.zeros((L, I, max(n_alleles)), dtype=np.int64)
    for (si, li, ai), c in raw.items():
        counts[li, si, ai] = c
    alleles = np.full((K, L, 2), -1, dtype=np.int64)
    for (ki, li), pair in geno_rows.items():
        alleles[ki, li] = pair

    cov = None
    if covariates is not None:
        cov = load_covariates(covariates, src_idx)
    paths = {"sources": str(sources), "colony": str(colony)}
    if covariates is not None:
        paths["covariates"] = str(covariates)
    return DataBundle(
        counts=AlleleCountTable(counts, n_alleles),
        genotypes=GenotypeTable(alleles, n_alleles),
        covariates=cov,
        source_names=list(src_idx),
        locus_names=list(loc_idx),
        allele_labels=[list(d) for d in allele_idx],
        individual_ids=list(ind_idx),
        paths=paths,
    )


def load_covariates(path, src_idx):
    """Covariate matrix over the sources in ``src_idx``; a blank file gives none."""
    if Path(path).exists() and Path(path).stat().st_size == 0:
        return CovariateMatrix.empty(len(src_idx))
    names = {}
    values = {}
    for lineno, (s, r, v) in _rows(path, COVARIATES_HEADER):
        if s not in src_idx:
            raise DataError(f"unknown source {s!r}", path, lineno)
        try:
            value = float(v)
        except ValueError:
            raise DataError(f"value {v!r} is not a number", path, lineno) from None
        ri = _index(names, r)
        if (ri, src_idx[s]) in values:
            raise DataError(f"duplicate value for source {s}, covariate {r}", path, lineno)
        values[(ri, src_idx[s])] = value
    raw = np.zeros((len(names), len(src_idx)))
    for r, ri in names.items():
        for s, si in src_idx.items():
            if (ri, si) not in values:
                raise DataError(f"covariate {r!r} has no value for source {s!r}", path)
            raw[ri, si] = values[(ri, si)]
    return CovariateMatrix(raw, tuple(names))


def load_bundle_dir(directory):
    d = Path(directory)
    cov = d / COVARIATES_FILE
    return load_bundle(d / SOURCES_FILE, d / COLONY_FILE, cov if cov.exists() else None)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_bundle(bundle, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    N = bundle.counts.counts
    rows = []
    # allele-major within locus keeps first-appearance order stable on reload
    for li, locus in enumerate(bundle.locus_names):
        for ai, allele in enumerate(bundle.allele_labels[li]):
            for si, source in enumerate(bundle.source_names):
                rows.append([source, locus, allele, int(N[li, si, ai])])
    _write(d / SOURCES_FILE, SOURCES_HEADER, rows)
    g = bundle.genotypes.alleles
    rows = []
    for ki, ind in enumerate(bundle.individual_ids):
        for li, locus in enumerate(bundle.locus_names):
            a1, a2 = g[ki, li]
            if a1 < 0:
                continue
            labels = bundle.allele_labels[li]
            rows.append([ind, locus, labels[a1], labels[a2]])
    _write(d / COLONY_FILE, COLONY_HEADER, rows)
    if bundle.covariates is not None:
        cov = bundle.covariates
        rows = [[s, r, repr(float(cov.raw[ri, si]))]
                for si, s in enumerate(bundle.source_names)
                for ri, r in enumerate(cov.names)]
        _write(d / COVARIATES_FILE, COVARIATES_HEADER, rows)
    return d


def bundle_from_arrays(counts, genotypes, covariates=None):
    """Wrap in-memory tables with generated labels (S1.., L1.., alleles 1..)."""
    I = counts.n_sources
    return DataBundle(
        counts=counts, genotypes=genotypes, covariates=covariates,
        source_names=[f"S{i + 1}" for i in range(I)],
        locus_names=[f"L{l + 1}" for l in range(counts.n_loci)],
        allele_labels=[[str(a + 1) for a in range(A)] for A in counts.n_alleles],
        individual_ids=[f"K{k + 1}" for k in range(genotypes.n_individuals)],
    )


# ---------------------------------------------------------------------------
# Ground truth sidecar
# ---------------------------------------------------------------------------

def write_truth(dataset, path, seed=None, scenario=None):
    truth = {
        "parameters": dataset.truth(),
        "m": [float(v) for v in dataset.m],
        "omega": float(dataset.omega),
        "alpha": [float(v) for v in dataset.alpha],
        "fst": float(dataset.fst),
        "P": np.asarray(dataset.P).tolist(),
        "hyper_frequencies": np.asarray(dataset.hyper_frequencies).tolist(),
    }
    if seed is not None:
        truth["seed"] = int(seed)
    if scenario is not None:
        truth["scenario"] = scenario
    with open(path, "w") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_truth(path):
    """Flat ``{parameter name: true value}`` mapping from a truth sidecar."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read truth file: {exc}", path) from exc
    if "parameters" not in data:
        raise DataError("truth file has no 'parameters' entry", path)
    return {k: float(v) for k, v in data["parameters"].items()}


# ---------------------------------------------------------------------------
# Chain files
# ---------------------------------------------------------------------------

def write_chain(chain, directory, extra=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / DRAWS_FILE, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["iteration", *chain.names, "loglik"])
        for t, row, ll in zip(chain.iterations, chain.draws, chain.loglik):
            w.writerow([int(t), *map(repr, row.tolist()), repr(float(ll))])
    run = {
        "prior": {"kind": chain.prior.kind, "alpha_var": chain.prior.alpha_var,
                  "tau_shape": chain.prior.tau_shape, "tau_rate": chain.prior.tau_rate},
        "config": chain.config.to_dict(),
        "seed": int(chain.config.seed),
        "acceptance": chain.acceptance,
        "n_alleles": list(chain.n_alleles),
        "n_sources": chain.n_sources,
        "n_covariates": chain.n_covariates,
        "n_draws": len(chain),
        "meta": chain.meta,
    }
    if extra:
        run.update(extra)
    with open(d / RUN_FILE, "w") as fh:
        json.dump(run, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return d


def read_chain(directory):
    from .sampler import ChainConfig, ChainOutput

    d = Path(directory)
    try:
        with open(d / RUN_FILE) as fh:
            run = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read run metadata: {exc}", d / RUN_FILE) from exc
    path = d / DRAWS_FILE
    if not path.exists():
        raise DataError("missing draws file", path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or header[0] != "iteration" or header[-1] != "loglik":
            raise DataError("malformed draws header", path, 1)
        body = [row for row in reader if row]
    if not body:
        raise DataError("chain has no draws", path)
    try:
        arr = np.array(body, dtype=float)
    except ValueError as exc:
        raise DataError(f"non-numeric draw: {exc}", path) from exc
    if arr.shape[1] != len(header):
        raise DataError("ragged draws table", path)
    if run.get("n_draws") is not None and run["n_draws"] != arr.shape[0]:
        raise DataError(f"metadata expects {run['n_draws']} draws, file has {arr.shape[0]}", path)
    return ChainOutput(
        names=header[1:-1],
        draws=arr[:, 1:-1],
        iterations=arr[:, 0].astype(np.int64),
        loglik=arr[:, -1],
        acceptance=run["acceptance"],
        prior=PriorSpec(**run["prior"]),
        config=ChainConfig(**run["config"]),
        n_alleles=tuple(run["n_alleles"]),
        n_sources=run["n_sources"],
        n_covariates=run["n_covariates"],
        meta={**run.get("meta", {}), **{k: v for k, v in run.items() if k in ("data", "labels")}},
    )


# ---------------------------------------------------------------------------
# Flat key = value config files
# ---------------------------------------------------------------------------

def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot open config {path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (x.strip() for x in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def ensure_writable_dir(directory):
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory: {exc.strerror}", d) from exc
    if not os.access(d, os.W_OK):
        raise DataError("output directory is not writable", d)
    return d
