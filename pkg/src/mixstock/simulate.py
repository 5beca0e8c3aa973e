"""Synthetic mixed-stock datasets and replicated simulation studies.

Source allele frequencies scatter around a hyper-population drawn from a
flat Dirichlet, with Wright's Fst controlling the spread; source samples
are multinomial; colony offspring have both parents from one source with
probability ``omega`` and otherwise two parents drawn independently from
``m``. True ``m`` is the softmax of the covariate regression.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .genetics import AlleleCountTable, GenotypeTable
from .priors import CovariateMatrix, PriorSpec, expected_m_given_alpha

log = logging.getLogger(__name__)

# Normalized distance and productivity of the seven grey-seal source colonies.
SIMULATION_COVARIATES = np.array([
    [-0.295, -0.849, -0.822, -0.562, -0.326, 1.533, 1.320],
    [1.298, 1.285, -0.238, -1.256, -0.729, 0.286, -0.646],
])
SIMULATION_COVARIATE_NAMES = ("distance", "productivity")

SCENARIOS = {
    "fst05-8loci": {"fst": 0.05, "n_loci": 8},
    "fst20-8loci": {"fst": 0.2, "n_loci": 8},
    "fst05-16loci": {"fst": 0.05, "n_loci": 16},
}


@dataclass
class SimulationConfig:
    n_sources: int = 7
    n_loci: int = 8
    n_alleles: int = 10
    fst: float = 0.05
    allele_total: int = 400
    colony_size: int = 160
    omega: float = 0.05
    alpha: tuple = (-0.5, 0.5)
    covariates: np.ndarray = field(default_factory=lambda: SIMULATION_COVARIATES.copy())
    covariate_names: tuple = SIMULATION_COVARIATE_NAMES
    seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        self.covariates = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        self.alpha = tuple(float(a) for a in self.alpha)
        self.validate()

    def validate(self):
        if not 0 < self.fst < 1:
            raise ConfigError("fst must lie strictly between 0 and 1")
        if not 0 <= self.omega <= 1:
            raise ConfigError("omega must lie in [0, 1]")
        for name in ("n_sources", "n_loci", "n_alleles", "allele_total", "colony_size",
                     "replicates"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.covariates.shape != (len(self.alpha), self.n_sources):
            raise ConfigError(
                f"covariates must have shape ({len(self.alpha)}, {self.n_sources}), "
                f"got {self.covariates.shape}"
            )

    @classmethod
    def scenario(cls, name, **overrides):
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
        return cls(**{**SCENARIOS[name], **overrides})

    @property
    def covariate_matrix(self):
        return CovariateMatrix(self.covariates, self.covariate_names)

    @property
    def true_m(self):
        return expected_m_given_alpha(np.asarray(self.alpha), self.covariate_matrix)


@dataclass
class SimulatedDataset:
    counts: AlleleCountTable
    genotypes: GenotypeTable
    covariates: CovariateMatrix
    hyper_frequencies: np.ndarray
    P: np.ndarray
    m: np.ndarray
    omega: float
    alpha: np.ndarray
    fst: float

    def truth(self):
        """Ground-truth values keyed by parameter name (intercept excluded)."""
        out = {f"m[{i + 1}]": float(v) for i, v in enumerate(self.m)}
        out["omega"] = float(self.omega)
        out.update({f"alpha[{r + 1}]": float(v) for r, v in enumerate(self.alpha)})
        return out


def gen_hyper_frequencies(n_loci, n_alleles, rng):
    """``(L, A)`` hyper-population frequencies, each row flat-Dirichlet."""
    if n_loci < 1 or n_alleles < 1:
        raise ValueError("n_loci and n_alleles must be positive")
    return rng.dirichlet(np.ones(n_alleles), size=n_loci)


def gen_source_frequencies(psi, fst, n_sources, rng):
    """``(L, I, A)`` source frequencies, row ``(l, i)`` from ``Dir(((1 - fst) / fst) psi_l)``."""
    if not 0 < fst < 1:
        raise ValueError("fst must lie strictly between 0 and 1")
    psi = np.atleast_2d(psi)
    scale = (1.0 - fst) / fst
    out = np.empty((psi.shape[0], n_sources, psi.shape[1]))
    for l in range(psi.shape[0]):
        if psi.shape[1] == 1:
            out[l] = 1.0
            continue
        out[l] = rng.dirichlet(scale * psi[l], size=n_sources)
    return out


def gen_allele_counts(P, total, rng):
    """Multinomial source samples of ``total`` alleles per (locus, source)."""
    if total < 1:
        raise ValueError("total must be at least 1")
    P = np.asarray(P, dtype=float)
    L, I, A = P.shape
    counts = np.empty((L, I, A), dtype=np.int64)
    for l in range(L):
        for i in range(I):
            counts[l, i] = rng.multinomial(total, P[l, i] / P[l, i].sum())
    return AlleleCountTable(counts, (A,) * L)


def _draw_alleles(cdf, u):
    # cdf (n, A) rows of cumulative frequencies
    return np.minimum((u[:, None] >= cdf).sum(axis=1), cdf.shape[1] - 1)


def gen_colony(m, P, omega, n, rng):
    """Genotypes of ``n`` first-generation colony offspring.

    With probability ``omega`` both parents come from a single source drawn
    from ``m``; otherwise each parent's source is drawn from ``m``
    independently. Each parent then transmits one allele per locus from its
    source's frequencies.
    """
    m = np.asarray(m, dtype=float)
    P = np.asarray(P, dtype=float)
    L, I, A = P.shape
    same = rng.random(n) < omega
    mother = rng.choice(I, size=n, p=m / m.sum())
    father = rng.choice(I, size=n, p=m / m.sum())
    father[same] = mother[same]
    alleles = np.empty((n, L, 2), dtype=np.int64)
    for l in range(L):
        cdf = np.cumsum(P[l], axis=1)
        alleles[:, l, 0] = _draw_alleles(cdf[mother], rng.random(n))
        alleles[:, l, 1] = _draw_alleles(cdf[father], rng.random(n))
    return GenotypeTable(alleles, (A,) * L)


def simulate_dataset(config, rng=None):
    if rng is None:
        rng = np.random.default_rng(config.seed)
    psi = gen_hyper_frequencies(config.n_loci, config.n_alleles, rng)
    P = gen_source_frequencies(psi, config.fst, config.n_sources, rng)
    counts = gen_allele_counts(P, config.allele_total, rng)
    m = config.true_m
    genotypes = gen_colony(m, P, config.omega, config.colony_size, rng)
    return SimulatedDataset(
        counts=counts, genotypes=genotypes, covariates=config.covariate_matrix,
        hyper_frequencies=psi, P=P, m=m, omega=config.omega,
        alpha=np.asarray(config.alpha), fst=config.fst,
    )


def replicate_seeds(seed, replicates):
    """Independent per-replicate seed sequences derived from one seed."""
    return np.random.SeedSequence(int(seed)).spawn(replicates)


# ---------------------------------------------------------------------------
# Replicated study
# ---------------------------------------------------------------------------

STUDY_PRIORS = ("dirichlet-dirichlet", "dirichlet-lognormal")
STUDY_PARAMETERS = ("m", "alpha", "omega")


@dataclass
class ReplicateResult:
    index: int
    truth: dict
    summaries: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)


@dataclass
class StudyResult:
    config: SimulationConfig
    priors: tuple
    replicates: list

    def aggregate(self, prior):
        """Replicate-averaged statistics for one prior, averaged over successful replicates."""
        from .diagnostics import aggregate_summaries

        fits = [r.summaries[prior] for r in self.replicates if prior in r.summaries]
        return aggregate_summaries(fits)

    @property
    def failures(self):
        return [(r.index, p, e) for r in self.replicates for p, e in r.errors.items()]


def _fit_replicate(args):
    from .diagnostics import summarize
    from .sampler import ChainConfig, run_chain

    index, sim_config, seq, chain_kwargs, priors, prior_kwargs = args
    sim_seq, *chain_seqs = seq.spawn(1 + len(priors))
    data = simulate_dataset(sim_config, np.random.default_rng(sim_seq))
    result = ReplicateResult(index=index, truth=data.truth())
    for prior_name, cseq in zip(priors, chain_seqs):
        seed = int(cseq.generate_state(1, np.uint64)[0])
        try:
            chain = run_chain(data.genotypes, data.counts, data.covariates,
                              PriorSpec(prior_name, **prior_kwargs),
                              ChainConfig(**{**chain_kwargs, "seed": seed}))
        except Exception as exc:  # per-replicate failures are reported, not fatal
            log.warning("replicate %d, prior %s failed: %s", index, prior_name, exc)
            result.errors[prior_name] = f"{type(exc).__name__}: {exc}"
            continue
        result.summaries[prior_name] = summarize(chain, truth=result.truth)
        result.acceptance[prior_name] = chain.acceptance
    return result


def run_study(scenario, replicates=50, seed=0, chain_config=None,
              priors=STUDY_PRIORS, n_jobs=1, prior_kwargs=None, **overrides):
    """Simulate ``replicates`` datasets, fit each prior, and collect summaries.

    ``scenario`` is a key of :data:`SCENARIOS` or a :class:`SimulationConfig`.
    ``chain_config`` is a :class:`~mixstock.sampler.ChainConfig` whose seed is
    replaced per replicate.
    """
    from .sampler import ChainConfig

    if isinstance(scenario, SimulationConfig):
        sim_config = replace(scenario, **overrides) if overrides else scenario
    else:
        sim_config = SimulationConfig.scenario(scenario, **overrides)
    chain_config = chain_config or ChainConfig()
    chain_kwargs = chain_config.to_dict()
    seqs = replicate_seeds(seed, replicates)
    jobs = [(k, sim_config, seqs[k], chain_kwargs, tuple(priors), prior_kwargs or {})
            for k in range(replicates)]
    if n_jobs == 1:
        results = [_fit_replicate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_fit_replicate, jobs))
    return StudyResult(config=sim_config, priors=tuple(priors), replicates=results)
