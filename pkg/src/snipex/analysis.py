"""Statistics over evaluation results: rates, truth tables, trends, bootstrap and rank-sum tests."""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import parse_timestamp

SUCCESS = "Success"
EXACT_RANKSUM_MAX_N = 20


class AnalysisError(ValueError):
    """The requested statistic is undefined for the given data."""


class EmptyReportError(AnalysisError):
    pass


class TrendUndefinedError(AnalysisError):
    pass


class GroupEmptyError(AnalysisError):
    pass


# ---------------------------------------------------------------- result sets


@dataclass
class SnippetResult:
    snippet_id: int
    statuses: dict[str, str] = field(default_factory=dict)
    line_count: int | None = None
    created_at: datetime | None = None
    is_accepted: bool | None = None
    github_ref_count: int | None = None


class ResultSet:
    """Per-snippet final statuses keyed by interpreter id, plus snippet metadata."""

    def __init__(self):
        self.snippets: dict[int, SnippetResult] = {}
        self.interpreters: list[str] = []
        self.duplicates = 0

    def __len__(self) -> int:
        return len(self.snippets)

    def __iter__(self):
        return iter(self.snippets[k] for k in sorted(self.snippets))

    def add(self, snippet_id: int, interpreter_id: str, status: str, meta: dict | None = None):
        entry = self.snippets.get(snippet_id)
        if entry is None:
            entry = self.snippets[snippet_id] = SnippetResult(snippet_id)
        if interpreter_id in entry.statuses:
            self.duplicates += 1
        entry.statuses[interpreter_id] = status
        if interpreter_id not in self.interpreters:
            self.interpreters.append(interpreter_id)
        if meta:
            if meta.get("line_count") is not None:
                entry.line_count = int(meta["line_count"])
            if meta.get("created_at"):
                entry.created_at = parse_timestamp(meta["created_at"])
            if meta.get("is_accepted") is not None:
                entry.is_accepted = bool(meta["is_accepted"])
            if meta.get("github_ref_count") is not None:
                entry.github_ref_count = int(meta["github_ref_count"])

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> ResultSet:
        rs = cls()
        for rec in records:
            rs.add(int(rec["snippet_id"]), rec["interpreter_id"], rec["final_status"], rec.get("snippet"))
        return rs

    def attach_corpus(self, snippets) -> None:
        for s in snippets:
            entry = self.snippets.get(s.snippet_id)
            if entry is None:
                continue
            entry.line_count = s.line_count
            entry.created_at = s.created_at
            entry.is_accepted = s.is_accepted
            entry.github_ref_count = s.github_ref_count


def load_results(path: Path | str) -> ResultSet:
    def records():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield json.loads(line)

    return ResultSet.from_records(records())


@dataclass(frozen=True)
class Selector:
    """Which executability notion to measure.

    ``overall``: success under any interpreter of ``pair`` (all interpreters
    when ``pair`` is None); ``single``: success under ``interp``;
    ``first_only``/``second_only``: success under exactly one side of ``pair``.
    """

    kind: str
    interp: str | None = None
    pair: tuple[str, str] | None = None

    @classmethod
    def overall(cls, pair: tuple[str, str] | None = None) -> Selector:
        return cls("overall", pair=tuple(pair) if pair else None)

    @classmethod
    def single(cls, interp: str) -> Selector:
        return cls("single", interp=interp)

    @classmethod
    def diff(cls, pair: tuple[str, str], side: str) -> Selector:
        if side not in ("first_only", "second_only"):
            raise ValueError(f"side must be first_only or second_only, not {side!r}")
        return cls(side, pair=tuple(pair))

    def executable(self, r: SnippetResult) -> bool | None:
        """True/False per snippet, None when the snippet lacks the needed results."""
        st = r.statuses
        if self.kind == "single":
            return None if self.interp not in st else st[self.interp] == SUCCESS
        if self.kind == "overall":
            keys = self.pair or tuple(st)
            if not keys or any(k not in st for k in keys):
                return None
            return any(st[k] == SUCCESS for k in keys)
        a, b = self.pair
        if a not in st or b not in st:
            return None
        ok_a, ok_b = st[a] == SUCCESS, st[b] == SUCCESS
        return (ok_a and not ok_b) if self.kind == "first_only" else (ok_b and not ok_a)

    def label(self) -> str:
        if self.kind == "single":
            return self.interp
        if self.kind == "overall":
            return "overall"
        a, b = self.pair
        return f"{a} not {b}" if self.kind == "first_only" else f"{b} not {a}"


# ---------------------------------------------------------------- rates


@dataclass(frozen=True)
class TruthTable:
    both: int
    first_only: int
    second_only: int
    neither: int
    excluded: int = 0

    @property
    def total(self) -> int:
        return self.both + self.first_only + self.second_only + self.neither


def truth_table(rs: ResultSet, pair: tuple[str, str]) -> TruthTable:
    a, b = pair
    counts = Counter()
    excluded = 0
    for r in rs:
        if a not in r.statuses or b not in r.statuses:
            excluded += 1
            continue
        counts[(r.statuses[a] == SUCCESS, r.statuses[b] == SUCCESS)] += 1
    return TruthTable(counts[(True, True)], counts[(True, False)], counts[(False, True)], counts[(False, False)], excluded)


@dataclass(frozen=True)
class RateReport:
    total: int
    first_rate: float
    second_rate: float
    overall_rate: float
    both_rate: float
    first_not_second: float
    second_not_first: float

    def rounded(self, digits: int = 2) -> dict:
        return {k: (round(v, digits) if isinstance(v, float) else v) for k, v in asdict(self).items()}


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def rates(table: TruthTable) -> RateReport:
    total = table.total
    if total <= 0:
        raise EmptyReportError("truth table is empty")
    first_ok = table.both + table.first_only
    second_ok = table.both + table.second_only
    return RateReport(
        total=total,
        first_rate=_pct(first_ok, total),
        second_rate=_pct(second_ok, total),
        overall_rate=_pct(table.both + table.first_only + table.second_only, total),
        both_rate=_pct(table.both, total),
        first_not_second=_pct(table.first_only, first_ok),
        second_not_first=_pct(table.second_only, second_ok),
    )


def status_distribution(rs: ResultSet, interp: str) -> list[tuple[str, int, float]]:
    counts = Counter(r.statuses[interp] for r in rs if interp in r.statuses)
    total = sum(counts.values())
    if total == 0:
        raise EmptyReportError(f"no results for interpreter {interp!r}")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(name, n, 100.0 * n / total) for name, n in ranked]


@dataclass(frozen=True)
class CurvePoint:
    line_count: int
    percent: float
    population: int
    pooled: bool = False


def line_count_curve(rs: ResultSet, selector: Selector | str, max_line: int = 30) -> list[CurvePoint]:
    """Executability per exact line count; counts above ``max_line`` share one pooled bin."""
    if isinstance(selector, str):
        selector = Selector.single(selector)
    pop, ok = Counter(), Counter()
    for r in rs:
        e = selector.executable(r)
        if e is None or r.line_count is None:
            continue
        key = min(r.line_count, max_line + 1)
        pop[key] += 1
        ok[key] += e
    return [CurvePoint(k, _pct(ok[k], pop[k]), pop[k], pooled=k > max_line) for k in sorted(pop)]


# ---------------------------------------------------------------- trend


def ols(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Slope and intercept of the least-squares line, centered two-pass form."""
    n = len(xs)
    if n < 2:
        raise TrendUndefinedError("need at least two points")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise TrendUndefinedError("all points share one x value")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, my - slope * mx


def _bin_midpoint(ts: datetime, bin: str) -> float:
    if bin == "year":
        return ts.year + 0.5
    if bin == "month":
        return ts.year + (ts.month - 0.5) / 12
    raise ValueError(f"bin must be 'year' or 'month', not {bin!r}")


@dataclass(frozen=True)
class TrendResult:
    label: str
    series: list[tuple[float, float, int]]
    slope: float
    intercept: float


def trend(rs: ResultSet, selector: Selector, bin: str = "year") -> TrendResult:
    """Executability percent per calendar bin and its OLS slope in percentage points per year."""
    pop, ok = Counter(), Counter()
    for r in rs:
        e = selector.executable(r)
        if e is None or r.created_at is None:
            continue
        x = _bin_midpoint(r.created_at, bin)
        pop[x] += 1
        ok[x] += e
    if len(pop) < 2:
        raise TrendUndefinedError(f"trend needs at least 2 non-empty bins, got {len(pop)}")
    series = [(x, _pct(ok[x], pop[x]), pop[x]) for x in sorted(pop)]
    slope, intercept = ols([p[0] for p in series], [p[1] for p in series])
    return TrendResult(selector.label(), series, slope, intercept)


# ---------------------------------------------------------------- bootstrap


@dataclass(frozen=True)
class BootstrapResult:
    mean_diff: float
    ci_low: float
    ci_high: float
    iterations: int
    seed: int


def _as_bool_array(group: Sequence[bool], name: str) -> np.ndarray:
    arr = np.asarray(list(group), dtype=bool)
    if arr.size == 0:
        raise AnalysisError(f"{name} is empty")
    return arr


def bootstrap_diff(
    group_a: Sequence[bool],
    group_b: Sequence[bool],
    iterations: int = 10000,
    seed: int = 0,
    partitions: int = 1,
) -> BootstrapResult:
    """Bootstrap the difference of success rates (a - b) in percentage points.

    Each iteration resamples both groups with replacement to their own size.
    The count of successes in such a resample of n items with k successes is
    Binomial(n, k/n), which is what gets drawn. The 95% interval uses the
    2.5th/97.5th percentiles with linear interpolation.
    """
    a = _as_bool_array(group_a, "group_a")
    b = _as_bool_array(group_b, "group_b")
    if iterations < 1:
        raise AnalysisError("iterations must be >= 1")
    if partitions < 1:
        raise AnalysisError("partitions must be >= 1")
    na, nb = a.size, b.size
    pa, pb = a.sum() / na, b.sum() / nb
    sizes = [iterations // partitions + (i < iterations % partitions) for i in range(partitions)]
    seeds = np.random.SeedSequence(seed).spawn(partitions)

    def draw(args):
        size, ss = args
        rng = np.random.Generator(np.random.PCG64(ss))
        ka = rng.binomial(na, pa, size=size)
        kb = rng.binomial(nb, pb, size=size)
        return (ka / na - kb / nb) * 100.0

    if partitions == 1:
        chunks = [draw((sizes[0], seeds[0]))]
    else:
        with ThreadPoolExecutor(partitions) as pool:
            chunks = list(pool.map(draw, zip(sizes, seeds)))
    diffs = np.concatenate(chunks)
    low, high = np.percentile(diffs, [2.5, 97.5], method="linear")
    return BootstrapResult(float(np.mean(diffs)), float(low), float(high), iterations, seed)


# ---------------------------------------------------------------- rank-sum


def midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _exact_ranksum_p(doubled: list[int], na: int, observed: int) -> float:
    """P(|W - E[W]| >= |w - E[W]|) under random assignment, W in doubled-rank units."""
    n = len(doubled)
    total_sum = sum(doubled)
    # ways[k][s]: number of k-subsets with doubled-rank sum s
    ways: list[dict[int, int]] = [dict() for _ in range(na + 1)]
    ways[0][0] = 1
    for r in doubled:
        for k in range(na, 0, -1):
            prev = ways[k - 1]
            cur = ways[k]
            for s, c in prev.items():
                cur[s + r] = cur.get(s + r, 0) + c
    dist = ways[na]
    # compare 2*n*|W - E[W]| with E[W] = na*total/n, all in integers
    dev_obs = abs(n * observed - na * total_sum)
    extreme = sum(c for s, c in dist.items() if abs(n * s - na * total_sum) >= dev_obs)
    return float(Fraction(extreme, math.comb(n, na)))


def ranksum(group_a: Sequence[float], group_b: Sequence[float], method: str = "auto") -> float:
    """Two-sided Wilcoxon rank-sum (Mann-Whitney) p-value.

    ``auto`` enumerates the exact null distribution when the combined size is
    at most 20 and otherwise uses the normal approximation with tie and
    continuity corrections.
    """
    a, b = list(group_a), list(group_b)
    if not a or not b:
        raise AnalysisError("both groups must be non-empty")
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    na, nb = len(a), len(b)
    n = na + nb
    doubled = [int(round(2 * r)) for r in midranks(a + b)]
    w2 = sum(doubled[:na])
    if method == "exact" or (method == "auto" and n <= EXACT_RANKSUM_MAX_N):
        return _exact_ranksum_p(doubled, na, w2)

    # 2U - na*nb, kept integral so swapping the groups only flips the sign
    dev2 = abs(w2 - na * (na + 1) - na * nb)
    ties = Counter(doubled)
    tie_term = sum(t**3 - t for t in ties.values())
    var = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return 1.0
    z = max(0.0, dev2 / 2.0 - 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


# ---------------------------------------------------------------- group comparison


@dataclass(frozen=True)
class GroupComparison:
    split: str
    selector: str
    in_group: str
    out_group: str
    n_in: int
    n_out: int
    rate_in: float
    rate_out: float
    rate_all: float
    lift_vs_out: float
    lift_vs_all: float
    bootstrap: BootstrapResult
    p_value: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bootstrap"] = asdict(self.bootstrap)
        return d


_SPLITS = {
    "accepted_vs_not": ("accepted", "not accepted", lambda r: r.is_accepted),
    "github_ref_vs_not": ("github referenced", "not referenced", lambda r: None if r.github_ref_count is None else r.github_ref_count > 0),
}


def group_compare(
    rs: ResultSet,
    split: str,
    selector: Selector,
    iterations: int = 10000,
    seed: int = 0,
) -> GroupComparison:
    """Compare executability of snippets inside vs outside a metadata group."""
    if split not in _SPLITS:
        raise ValueError(f"split must be one of {sorted(_SPLITS)}")
    in_label, out_label, member = _SPLITS[split]
    inside, outside = [], []
    for r in rs:
        e = selector.executable(r)
        m = member(r)
        if e is None or m is None:
            continue
        (inside if m else outside).append(e)
    if not inside or not outside:
        raise GroupEmptyError(f"{split}: group sizes {len(inside)}/{len(outside)}, both must be non-empty")
    rate_in, rate_out = _pct(sum(inside), len(inside)), _pct(sum(outside), len(outside))
    rate_all = _pct(sum(inside) + sum(outside), len(inside) + len(outside))
    return GroupComparison(
        split=split,
        selector=selector.label(),
        in_group=in_label,
        out_group=out_label,
        n_in=len(inside),
        n_out=len(outside),
        rate_in=rate_in,
        rate_out=rate_out,
        rate_all=rate_all,
        lift_vs_out=_pct(rate_in - rate_out, rate_out) if rate_out else float("nan"),
        lift_vs_all=_pct(rate_in - rate_all, rate_all) if rate_all else float("nan"),
        bootstrap=bootstrap_diff(inside, outside, iterations, seed),
        p_value=ranksum([float(x) for x in inside], [float(x) for x in outside]),
    )
