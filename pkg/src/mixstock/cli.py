"""Command-line entry point: ``mixstock {simulate,fit,summarize,compare,study}``.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
Every subcommand takes ``--config FILE`` with ``key = value`` lines named
after its long options (dashes or underscores); flags given on the command
line override the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, MixStockError
from .priors import PRIOR_KINDS, PriorSpec

log = logging.getLogger("mixstock")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# defaults live here rather than in argparse so config files can fill gaps
DEFAULTS = {
    "simulate": {"scenario": "fst05-8loci", "seed": 0, "replicates": 1},
    "fit": {"prior": "dirichlet-dirichlet", "iterations": 30000, "burnin": 5000, "thin": 5,
            "seed": 0, "adapt": True, "adapt_window": 50},
    "summarize": {"level": 0.95, "mode": "auto"},
    "compare": {},
    "study": {"scenario": "fst20-8loci", "replicates": 10, "seed": 0, "iterations": 10000,
              "burnin": 2000, "thin": 5, "jobs": 1},
}

# options whose config-file values need converting from text
INT_KEYS = {"seed", "replicates", "iterations", "burnin", "thin", "adapt_window", "jobs",
            "loci", "alleles", "colony_size", "allele_total"}
FLOAT_KEYS = {"fst", "omega", "level"}
LIST_KEYS = {"step", "proposal", "prior_list", "truth"}


def _add_data_args(p):
    p.add_argument("--data", help="directory holding sources.tsv, colony.tsv, covariates.tsv")
    p.add_argument("--sources", help="source allele counts file")
    p.add_argument("--colony", help="colony genotypes file")
    p.add_argument("--covariates", help="source covariates file")


def _add_chain_args(p):
    p.add_argument("--iterations", type=int, help="total sweeps including burn-in")
    p.add_argument("--burnin", type=int, help="sweeps discarded before retaining draws")
    p.add_argument("--thin", type=int, help="keep every n-th post-burn-in sweep")


def build_parser():
    parser = _Parser(prog="mixstock", description="Bayesian mixed-stock analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("simulate", help="write a synthetic data bundle with its ground truth")
    p.add_argument("--config")
    p.add_argument("--scenario", help="fst05-8loci (Fst 0.05, 8 loci), fst20-8loci (0.2, 8), "
                                      "fst05-16loci (0.05, 16)")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int, help="number of datasets (rep_001, ... when > 1)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--fst", type=float)
    p.add_argument("--loci", type=int)
    p.add_argument("--alleles", type=int, help="alleles per locus")
    p.add_argument("--colony-size", type=int)
    p.add_argument("--allele-total", type=int, help="alleles sampled per source and locus")
    p.add_argument("--omega", type=float, help="assortative mating probability")

    p = sub.add_parser("fit", help="run the sampler on a data bundle")
    p.add_argument("--config")
    _add_data_args(p)
    p.add_argument("--prior", choices=PRIOR_KINDS)
    _add_chain_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory for draws.tsv and run.json")
    p.add_argument("--step", action="append", metavar="BLOCK=SIZE",
                   help="initial proposal scale for a block (repeatable)")
    p.add_argument("--proposal", action="append", metavar="BLOCK=STYLE",
                   help="random-walk or independence for P, m or phi (repeatable)")
    p.add_argument("--no-adapt", dest="adapt", action="store_const", const=False,
                   help="keep proposal scales fixed during burn-in")
    p.add_argument("--adapt-window", type=int)

    p = sub.add_parser("summarize", help="posterior summary tables and figures")
    p.add_argument("chains", nargs="*", help="chain directories written by fit")
    p.add_argument("--config")
    p.add_argument("--truth", action="append", help="truth.json (one for all chains, or one each)")
    p.add_argument("--level", type=float, help="HPD probability mass")
    p.add_argument("--parameters", help="comma-separated names, or 'all'")
    p.add_argument("--mode", choices=("auto", "models", "replicates"),
                   help="side-by-side models, or replicate averages per prior")
    p.add_argument("--out", help="directory for tables and figures")

    p = sub.add_parser("compare", help="DIC and LPML for chains fitted to the same data")
    p.add_argument("chains", nargs="*", help="chain directories written by fit")
    p.add_argument("--config")
    _add_data_args(p)
    p.add_argument("--out", help="directory for the score table and figure")

    p = sub.add_parser("study", help="replicated simulate-and-fit study")
    p.add_argument("--config")
    p.add_argument("--scenario")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--prior", dest="prior_list", action="append", choices=PRIOR_KINDS,
                   help="prior to fit (repeatable; default dirichlet-dirichlet and "
                        "dirichlet-lognormal)")
    _add_chain_args(p)
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--out", help="directory for tables and figures")
    return parser


def _convert(key, value):
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ConfigError(f"config value for {key!r} must be a number, got {value!r}") from None
    if key == "adapt":
        if value.lower() in ("true", "yes", "1"):
            return True
        if value.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"config value for 'adapt' must be true or false, got {value!r}")
    if key in LIST_KEYS or key == "chains":
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


def resolve(args):
    """Merge defaults, the config file and explicit flags (in rising priority)."""
    from .io import read_config

    opts = dict(DEFAULTS[args.command])
    explicit = {k: v for k, v in vars(args).items()
                if v is not None and k not in ("command", "config", "verbose")}
    if getattr(args, "config", None):
        allowed = (set(vars(args)) | set(opts)) - {"command", "config", "verbose"}
        for key, value in read_config(args.config).items():
            norm = key.replace("-", "_")
            if norm == "prior" and args.command == "study":
                norm = "prior_list"
            if norm not in allowed:
                raise ConfigError(f"unknown config key {key!r} for {args.command}")
            opts[norm] = _convert(norm, value)
    for k, v in explicit.items():
        if k == "chains" and not v:
            continue
        opts[k] = v
    return opts


def _pairs(items, what):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"{what} must look like BLOCK=VALUE, got {item!r}")
        k, v = (x.strip() for x in item.split("=", 1))
        out[k] = v
    return out


def _need(opts, key):
    if opts.get(key) in (None, "", []):
        raise ConfigError(f"--{key.replace('_', '-')} is required")
    return opts[key]


def _data_paths(opts):
    if opts.get("data"):
        d = Path(opts["data"])
        cov = opts.get("covariates") or (d / "covariates.tsv")
        return (opts.get("sources") or d / "sources.tsv", opts.get("colony") or d / "colony.tsv",
                cov if Path(cov).exists() else None)
    if opts.get("sources") and opts.get("colony"):
        return opts["sources"], opts["colony"], opts.get("covariates")
    raise ConfigError("give --data DIR, or both --sources and --colony")


def _load_data(opts):
    from .io import load_bundle

    sources, colony, covariates = _data_paths(opts)
    return load_bundle(sources, colony, covariates)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(opts):
    from .io import TRUTH_FILE, bundle_from_arrays, ensure_writable_dir, write_bundle, write_truth
    from .simulate import SimulationConfig, replicate_seeds, simulate_dataset

    out = Path(_need(opts, "out"))
    overrides = {k: opts[src] for k, src in (("fst", "fst"), ("n_loci", "loci"),
                                             ("n_alleles", "alleles"),
                                             ("colony_size", "colony_size"),
                                             ("allele_total", "allele_total"),
                                             ("omega", "omega"))
                 if opts.get(src) is not None}
    config = SimulationConfig.scenario(opts["scenario"], seed=opts["seed"], **overrides)
    R = opts["replicates"]
    if R < 1:
        raise ConfigError("--replicates must be at least 1")
    if not 0 <= opts["seed"] < 2**64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    ensure_writable_dir(out)
    if R == 1:
        targets = [(out, np.random.default_rng(opts["seed"]))]
    else:
        targets = [(out / f"rep_{k + 1:03d}", np.random.default_rng(s))
                   for k, s in enumerate(replicate_seeds(opts["seed"], R))]
    for d, rng in targets:
        data = simulate_dataset(config, rng)
        bundle = bundle_from_arrays(data.counts, data.genotypes, data.covariates)
        write_bundle(bundle, ensure_writable_dir(d))
        write_truth(data, d / TRUTH_FILE, seed=opts["seed"], scenario=opts["scenario"])
    print(f"seed\t{opts['seed']}")
    print(f"wrote\t{len(targets)} dataset(s) under {out}")
    return EXIT_OK


def cmd_fit(opts):
    from .io import ensure_writable_dir, write_chain
    from .sampler import ChainConfig, run_chain

    out = Path(_need(opts, "out"))
    steps = {k: float(v) for k, v in _pairs(opts.get("step"), "--step").items()}
    config = ChainConfig(iterations=opts["iterations"], burnin=opts["burnin"],
                         thin=opts["thin"], seed=opts["seed"], step_sizes=steps,
                         proposal=_pairs(opts.get("proposal"), "--proposal"),
                         adapt=opts["adapt"], adapt_window=opts["adapt_window"])
    prior = PriorSpec(opts["prior"])
    if config.n_draws < 1:
        raise ConfigError("no draws would be retained; lengthen the chain or reduce --thin")
    bundle = _load_data(opts)
    if prior.uses_covariates and (bundle.covariates is None
                                  or bundle.covariates.n_covariates == 0):
        raise DataError(f"prior {prior.kind!r} needs a non-empty covariates file")
    ensure_writable_dir(out)
    chain = run_chain(bundle.genotypes, bundle.counts, bundle.covariates, prior, config)
    extra = {
        "data": bundle.paths,
        "labels": {"sources": bundle.source_names, "loci": bundle.locus_names,
                   "alleles": bundle.allele_labels,
                   "covariates": list(bundle.covariates.names) if bundle.covariates else []},
    }
    write_chain(chain, out, extra)
    acc = ", ".join(f"{k} {v:.2f}" for k, v in chain.acceptance.items())
    print(f"wrote\t{len(chain)} draws to {out}")
    print(f"acceptance\t{acc}")
    return EXIT_OK


def _load_chains(paths):
    from .io import read_chain

    if not paths:
        raise ConfigError("give at least one chain directory")
    return [(Path(p), read_chain(p)) for p in paths]


def _labels(chains):
    kinds = [c.prior.kind for _, c in chains]
    if len(set(kinds)) == len(kinds):
        return kinds
    return [p.name or str(p) for p, _ in chains]


def cmd_summarize(opts):
    from . import plots, reports
    from .diagnostics import aggregate_summaries, default_parameters, summarize
    from .io import ensure_writable_dir, read_truth

    level = opts["level"]
    if not 0 < level < 1:
        raise ConfigError("--level must lie in (0, 1)")
    chains = _load_chains(opts.get("chains"))
    truths = [read_truth(t) for t in opts.get("truth") or []]
    if len(truths) not in (0, 1, len(chains)):
        raise ConfigError("give one --truth for all chains or one per chain")
    if len(truths) == 1:
        truths = truths * len(chains)
    mode = opts["mode"]
    if mode == "auto":
        mode = "replicates" if truths and len(chains) > 1 else "models"

    wanted = opts.get("parameters")
    summaries = []
    for k, (path, chain) in enumerate(chains):
        if wanted == "all":
            params = "all"
        elif wanted:
            params = [s.strip() for s in wanted.split(",") if s.strip()]
            missing = [p for p in params if p not in chain.names]
            if missing:
                raise DataError(f"chain has no parameter(s) {', '.join(missing)}", path)
        else:
            params = None
        summaries.append(summarize(chain, truth=truths[k] if truths else None,
                                   level=level, parameters=params))

    out = Path(opts["out"]) if opts.get("out") else None
    if out:
        ensure_writable_dir(out)
    if mode == "replicates":
        groups = {}
        for (_, chain), s in zip(chains, summaries):
            groups.setdefault(chain.prior.kind, []).append(s)
        aggregates = {kind: aggregate_summaries(ss) for kind, ss in groups.items()}
        table = reports.study_table(aggregates)
        reports.write_rows(table)
        if out:
            reports.write_rows(table, out / "summary.tsv")
            reports.write_rows(reports.study_long_rows(aggregates), out / "summary_long.tsv")
            plots.plot_study(aggregates, out / "study.png")
    else:
        labels = _labels(chains)
        by_model = dict(zip(labels, summaries))
        table = reports.posterior_table(by_model)
        reports.write_rows(table)
        if out:
            reports.write_rows(table, out / "summary.tsv")
            reports.write_rows(reports.long_rows(by_model), out / "summary_long.tsv")
            names = summaries[0].names
            plots.plot_posterior_densities(dict(zip(labels, (c for _, c in chains))), names,
                                           out / "posterior_densities.png",
                                           truth=truths[0] if truths else None)
            for label, (_, chain) in zip(labels, chains):
                plots.plot_traces(chain, default_parameters(chain.names),
                                  out / f"trace_{label}.png")
    return EXIT_OK


def cmd_compare(opts):
    from . import plots, reports
    from .diagnostics import model_score
    from .io import ensure_writable_dir
    from .sampler import data_fingerprint

    chains = _load_chains(opts.get("chains"))
    bundle = _load_data(opts)
    expected = data_fingerprint(bundle.genotypes, bundle.counts)
    for path, chain in chains:
        got = chain.meta.get("data_hash")
        if got != expected:
            raise DataError("chain was fitted to different data than --data; "
                            "comparison is invalid", path)
        if tuple(chain.n_alleles) != tuple(bundle.counts.n_alleles):
            raise DataError("chain dimensions do not match the data", path)
    scores = [model_score(chain, bundle.genotypes, bundle.counts, model=label)
              for label, (_, chain) in zip(_labels(chains), chains)]
    table = reports.score_table(scores)
    reports.write_rows(table)
    if opts.get("out"):
        out = ensure_writable_dir(opts["out"])
        rows = [["model", "dbar", "pd", "dic", "lpml"]]
        rows += [[s.model, repr(s.dbar), repr(s.pd), repr(s.dic), repr(s.lpml)] for s in scores]
        reports.write_rows(table, out / "scores.tsv")
        reports.write_rows(rows, out / "scores_long.tsv")
        plots.plot_scores(scores, out / "scores.png")
    return EXIT_OK


def cmd_study(opts):
    from . import plots, reports
    from .io import ensure_writable_dir
    from .sampler import ChainConfig
    from .simulate import STUDY_PRIORS, run_study

    priors = tuple(opts.get("prior_list") or STUDY_PRIORS)
    for p in priors:
        PriorSpec(p)
    config = ChainConfig(iterations=opts["iterations"], burnin=opts["burnin"],
                         thin=opts["thin"], seed=0)
    if opts["replicates"] < 1 or opts["jobs"] < 1:
        raise ConfigError("--replicates and --jobs must be positive")
    out = ensure_writable_dir(opts["out"]) if opts.get("out") else None
    study = run_study(opts["scenario"], replicates=opts["replicates"], seed=opts["seed"],
                      chain_config=config, priors=priors, n_jobs=opts["jobs"])
    aggregates = {p: study.aggregate(p) for p in priors}
    for index, prior, err in study.failures:
        print(f"replicate {index + 1} ({prior}) failed: {err}", file=sys.stderr)
    if not any(aggregates.values()):
        raise MixStockError("every replicate failed")
    aggregates = {p: a for p, a in aggregates.items() if a}
    table = reports.study_table(aggregates)
    reports.write_rows(table)
    if out:
        reports.write_rows(table, out / "study.tsv")
        reports.write_rows(reports.study_long_rows(aggregates), out / "study_long.tsv")
        with open(out / "study.json", "w") as fh:
            json.dump({"scenario": opts["scenario"], "replicates": opts["replicates"],
                       "seed": opts["seed"], "priors": list(priors), "config": config.to_dict(),
                       "failures": [list(f) for f in study.failures]}, fh, indent=1,
                      sort_keys=True)
            fh.write("\n")
        plots.plot_study(aggregates, out / "study.png")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "summarize": cmd_summarize,
            "compare": cmd_compare, "study": cmd_study}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except (ConfigError, DataError, UsageError) as exc:
        print(f"mixstock {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MixStockError, ArithmeticError, RuntimeError, OSError, ValueError) as exc:
        print(f"mixstock {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
