"""Delimited text tables for posterior summaries, replicated studies and model scores."""

from __future__ import annotations

import csv
import io
import sys


def _fmt(x, digits=3):
    if x is None:
        return ""
    return f"{x:.{digits}f}"


def posterior_table(summaries, digits=3):
    """Mean and HPD interval per parameter, two columns per model.

    ``summaries`` maps a model label to a :class:`PosteriorSummary`.
    """
    models = list(summaries)
    level = next(iter(summaries.values())).level if summaries else 0.95
    pct = f"{round(100 * level)}%"
    header = ["parameter"]
    for model in models:
        header += [f"{model} Mean", f"{model} {pct} HPD"]
    names = []
    for s in summaries.values():
        names += [n for n in s.names if n not in names]
    rows = [header]
    for name in names:
        row = [name]
        for model in models:
            s = summaries[model]
            if name in s:
                r = s[name]
                row += [_fmt(r.mean, digits),
                        f"({_fmt(r.hpd_lower, digits)}, {_fmt(r.hpd_upper, digits)})"]
            else:
                row += ["", ""]
        rows.append(row)
    return rows


STUDY_STATISTICS = ("mean", "sd", "rmse", "hpd_length")


def study_table(aggregates, digits=3):
    """Replicate-averaged statistics, four rows per parameter.

    ``aggregates`` maps a model label to a list of :class:`AggregateRow`.
    The statistics are the average posterior mean, average posterior SD,
    average RMSE against the truth, and average HPD interval length.
    """
    models = list(aggregates)
    rows = [["parameter", "TRUE", "statistic", *models]]
    by_model = {m: {r.name: r for r in rows_} for m, rows_ in aggregates.items()}
    names = []
    for rows_ in aggregates.values():
        names += [r.name for r in rows_ if r.name not in names]
    for name in names:
        truth = next((by_model[m][name].truth for m in models
                      if name in by_model[m] and by_model[m][name].truth is not None), None)
        for stat in STUDY_STATISTICS:
            row = [name, _fmt(truth, digits), stat]
            for m in models:
                r = by_model[m].get(name)
                row.append(_fmt(getattr(r, stat), digits) if r is not None else "")
            rows.append(row)
    return rows


def score_table(scores, digits=2):
    rows = [["Model", "Dbar", "pD", "DIC", "LPML"]]
    for s in scores:
        rows.append([s.model, _fmt(s.dbar, digits), _fmt(s.pd, digits),
                     _fmt(s.dic, digits), _fmt(s.lpml, digits)])
    return rows


def long_rows(summaries):
    """One full-precision row per (model, parameter)."""
    rows = [["model", "parameter", "mean", "sd", "hpd_lower", "hpd_upper", "level",
             "rhat", "truth", "rmse"]]
    for model, s in summaries.items():
        for r in s.rows:
            rows.append([model, r.name, repr(r.mean), repr(r.sd), repr(r.hpd_lower),
                         repr(r.hpd_upper), repr(s.level), repr(r.rhat),
                         "" if r.truth is None else repr(r.truth),
                         "" if r.rmse is None else repr(r.rmse)])
    return rows


def study_long_rows(aggregates):
    rows = [["model", "parameter", "truth", "mean", "sd", "rmse", "hpd_length", "replicates"]]
    for model, agg in aggregates.items():
        for r in agg:
            rows.append([model, r.name, "" if r.truth is None else repr(r.truth),
                         repr(r.mean), repr(r.sd), "" if r.rmse is None else repr(r.rmse),
                         repr(r.hpd_length), r.n])
    return rows


def write_rows(rows, dest=None, delimiter="\t"):
    """Write rows to a path, a stream, or stdout when ``dest`` is None."""
    if dest is None or hasattr(dest, "write"):
        w = csv.writer(dest or sys.stdout, delimiter=delimiter, lineterminator="\n")
        w.writerows(rows)
        return
    with open(dest, "w", newline="") as fh:
        csv.writer(fh, delimiter=delimiter, lineterminator="\n").writerows(rows)


def render(rows, delimiter="\t"):
    buf = io.StringIO()
    write_rows(rows, buf, delimiter)
    return buf.getvalue()
