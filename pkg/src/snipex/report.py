"""Plain-text tables and JSON reports over a ResultSet."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict

from .analysis import (
    AnalysisError,
    ResultSet,
    Selector,
    group_compare,
    line_count_curve,
    rates,
    status_distribution,
    trend,
    truth_table,
)

# Full-corpus figures from the original 269,784-snippet study. They need the
# complete dump and 2019-era interpreters/packages, so they are shipped for
# reference and never asserted against desk-scale runs.
REFERENCE_VALUES = {
    "py2_success_rate": 26.0,
    "py3_success_rate": 23.0,
    "overall_success_rate": 27.92,
    "both_success_rate": 20.74,
    "truth_table": {"both": 55960, "first_only": 13633, "second_only": 5729, "neither": 194462},
    # status name -> (py2 count, py2 %, py3 count, py3 %); None where a status cannot occur
    "table1": {
        "SyntaxError": (80451, 29.82, 97475, 36.13),
        "NameError": (77671, 28.79, 76104, 28.21),
        "Success": (69593, 25.80, 61689, 22.87),
        "IndentationError": (14742, 5.46, 8228, 3.05),
        "UnknownError": (11742, 4.35, 13279, 4.92),
        "ImportError": (3619, 1.34, 507, 0.19),
        "EOFError": (2604, 0.97, 1713, 0.63),
        "FileNotFoundError": (None, None, 4314, 1.60),
        "TypeError": (1763, 0.65, 1699, 0.63),
        "ModuleNotFoundError": (None, None, 2751, 1.02),
    },
    "accepted_vs_not": {"mean_diff": -1.75, "ci": [-2.16, -1.36], "p_value": 0.2163},
    "github_ref_vs_not": {"rate_in": 35.09, "mean_diff": 7.2, "ci": [3.69, 10.77], "p_value": 5.985e-06},
    "trend_pp_per_year": {"overall": 0.1, "py2": -0.1, "py3": 0.5, "py2_not_py3": -0.42, "py3_not_py2": 0.21},
}


def _table(header: list[str], rows: list[list[str]], align: str) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]

    def fmt(row):
        cells = []
        for value, width, a in zip(row, widths, align):
            cells.append(str(value).ljust(width) if a == "l" else str(value).rjust(width))
        return "  ".join(cells).rstrip()

    sep = "-" * len(fmt(header))
    return "\n".join([fmt(header), sep, *map(fmt, rows)])


def table1(rs: ResultSet, pair: tuple[str, str], top: int = 10) -> str:
    """Status counts and percentages side by side for two interpreters."""
    a, b = pair
    dist = {i: {name: (n, pct) for name, n, pct in status_distribution(rs, i)} for i in pair}
    combined = {}
    for i in pair:
        for name, (n, _) in dist[i].items():
            combined[name] = combined.get(name, 0) + n
    names = sorted(combined, key=lambda k: (-combined[k], k))[:top]
    rows = []
    for name in names:
        row = [name]
        for i in pair:
            if name in dist[i]:
                n, pct = dist[i][name]
                row += [str(n), f"{pct:.2f}"]
            else:
                row += ["N/A", "N/A"]
        rows.append(row)
    return _table(["Status Name", f"{a} Count", "%", f"{b} Count", "%"], rows, "lrrrr")


def table2(rs: ResultSet, pair: tuple[str, str]) -> str:
    """Four-way success table for an interpreter pair, followed by the derived rates."""
    a, b = pair
    tt = truth_table(rs, pair)
    rows = [
        ["Yes", "Yes", str(tt.both)],
        ["Yes", "No", str(tt.first_only)],
        ["No", "Yes", str(tt.second_only)],
        ["No", "No", str(tt.neither)],
    ]
    out = _table([f"{a} Execution", f"{b} Execution", "Count"], rows, "llr")
    r = rates(tt).rounded()
    lines = [
        out,
        "",
        f"{a} success rate: {r['first_rate']:.2f}%",
        f"{b} success rate: {r['second_rate']:.2f}%",
        f"overall (either) success rate: {r['overall_rate']:.2f}%",
        f"success in both: {r['both_rate']:.2f}%",
        f"{a} successes failing under {b}: {r['first_not_second']:.2f}%",
        f"{b} successes failing under {a}: {r['second_not_first']:.2f}%",
    ]
    if tt.excluded:
        lines.append(f"snippets without both results (excluded): {tt.excluded}")
    return "\n".join(lines)


def trends_text(rs: ResultSet, pair: tuple[str, str], bin: str = "year") -> str:
    rows = []
    for sel in _trend_selectors(pair):
        try:
            t = trend(rs, sel, bin)
        except AnalysisError as e:
            rows.append([sel.label(), "n/a", str(e)])
            continue
        rows.append([t.label, f"{t.slope:+.3f}", f"{len(t.series)} bins"])
    return _table(["Series", "pp/year", "Notes"], rows, "lrl")


def _trend_selectors(pair):
    a, b = pair
    return [
        Selector.overall(pair),
        Selector.single(a),
        Selector.single(b),
        Selector.diff(pair, "first_only"),
        Selector.diff(pair, "second_only"),
    ]


def groups_text(rs: ResultSet, pair: tuple[str, str], iterations: int, seed: int) -> str:
    rows = []
    for split in ("accepted_vs_not", "github_ref_vs_not"):
        try:
            g = group_compare(rs, split, Selector.overall(pair), iterations, seed)
        except AnalysisError as e:
            rows.append([split, "n/a", "", "", "", str(e)])
            continue
        rows.append(
            [
                split,
                f"{g.rate_in:.2f} / {g.rate_out:.2f}",
                f"{g.bootstrap.mean_diff:+.2f}",
                f"[{g.bootstrap.ci_low:.2f}, {g.bootstrap.ci_high:.2f}]",
                f"{g.p_value:.4g}",
                f"n={g.n_in}/{g.n_out}",
            ]
        )
    return _table(["Split", "Rate in/out %", "Mean diff", "95% CI", "p", "Notes"], rows, "lrrrrl")


def line_curve_csv(rs: ResultSet, selector: Selector, max_line: int = 30) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["line_count", "percent", "population", "pooled"])
    for p in line_count_curve(rs, selector, max_line):
        w.writerow([p.line_count, f"{p.percent:.4f}", p.population, int(p.pooled)])
    return buf.getvalue()


def _clean(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def full_report(rs: ResultSet, pair: tuple[str, str], iterations: int = 10000, seed: int = 0, max_line: int = 30) -> dict:
    """Everything computable from ``rs``; sections that are undefined carry an error string."""
    report: dict = {"interpreters": rs.interpreters, "pair": list(pair), "snippets": len(rs)}

    def section(name, fn):
        try:
            report[name] = fn()
        except AnalysisError as e:
            report[name] = {"error": str(e)}

    tt = truth_table(rs, pair)
    report["truth_table"] = asdict(tt)
    section("rates", lambda: asdict(rates(tt)))
    section(
        "status_distribution",
        lambda: {i: [[n, c, p] for n, c, p in status_distribution(rs, i)] for i in pair},
    )
    section(
        "line_count_curve",
        lambda: [asdict(p) for p in line_count_curve(rs, Selector.overall(pair), max_line)],
    )
    trends = {}
    for sel in _trend_selectors(pair):
        try:
            t = trend(rs, sel)
            trends[t.label] = {"slope": t.slope, "intercept": t.intercept, "series": t.series}
        except AnalysisError as e:
            trends[sel.label()] = {"error": str(e)}
    report["trends"] = trends
    groups = {}
    for split in ("accepted_vs_not", "github_ref_vs_not"):
        try:
            groups[split] = group_compare(rs, split, Selector.overall(pair), iterations, seed).to_dict()
        except AnalysisError as e:
            groups[split] = {"error": str(e)}
    report["groups"] = groups
    report["reference_values"] = REFERENCE_VALUES
    return _clean(report)
