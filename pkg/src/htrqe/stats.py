"""Rank statistics used to validate quality metrics against reference CERs.

Spearman rank correlation (with exact small-n permutation p-values and a
t-approximation otherwise), polynomial regression reported by adjusted
R², Top-N hit analysis, and single-factor ANOVA.  All operations are
pure; rankings carry their direction so that error rates (lower is
better) and ratio metrics (higher is better) compare consistently.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as scipy_stats

from .errors import DataError

LOWER_IS_BETTER = "lower_is_better"
HIGHER_IS_BETTER = "higher_is_better"

#: Significance levels reported for correlations, finest last.
SIGNIFICANCE_LEVELS = (0.05, 0.025, 0.01, 0.005, 0.001)

#: Largest n for which the permutation p-value is enumerated exactly.
EXACT_P_MAX_N = 8

_TIE_EPS = 1e-12


@dataclass(frozen=True)
class Ranking:
    """Scores plus their ranks; rank 1 is the best score under direction."""

    items: tuple[tuple[str, float], ...]
    ranks: dict[str, float]
    direction: str

    @property
    def n(self) -> int:
        return len(self.items)

    def ids(self) -> frozenset[str]:
        return frozenset(m for m, _ in self.items)

    def top(self) -> str:
        """Best-ranked model id; ties resolve to the earliest item."""
        best = min(
            range(len(self.items)),
            key=lambda i: (self.ranks[self.items[i][0]], i),
        )
        return self.items[best][0]

    def competition_rank(self, model_id: str) -> int:
        """1 + number of strictly better models (ties share a bucket)."""
        mine = self.ranks[model_id]
        return 1 + sum(1 for v in self.ranks.values() if v < mine - _TIE_EPS)


def rank(scores, direction: str) -> Ranking:
    """Average-rank the (model_id, score) pairs, best first."""
    if direction not in (LOWER_IS_BETTER, HIGHER_IS_BETTER):
        raise DataError(f"unknown direction: {direction!r}")
    items = tuple((str(m), float(s)) for m, s in scores)
    if not items:
        raise DataError("cannot rank an empty score list")
    if len({m for m, _ in items}) != len(items):
        raise DataError("duplicate model ids in ranking input")
    for m, s in items:
        if not math.isfinite(s):
            raise DataError(f"non-finite score for {m!r}: {s}")
    sign = -1.0 if direction == HIGHER_IS_BETTER else 1.0
    order = sorted(range(len(items)), key=lambda i: sign * items[i][1])
    ranks: dict[str, float] = {}
    pos = 0
    while pos < len(order):
        end = pos
        while (
            end + 1 < len(order)
            and items[order[end + 1]][1] == items[order[pos]][1]
        ):
            end += 1
        avg = (pos + 1 + end + 1) / 2.0
        for i in order[pos : end + 1]:
            ranks[items[i][0]] = avg
        pos = end + 1
    return Ranking(items=items, ranks=ranks, direction=direction)


@dataclass(frozen=True)
class RankCorrelation:
    rho: float
    n: int
    d_squared_sum: float
    p_value: float
    significance_level: float | None
    tie_corrected: bool


def _require_same_ids(a: Ranking, b: Ranking) -> None:
    if a.ids() != b.ids():
        diff = sorted(a.ids() ^ b.ids())
        raise DataError(f"rankings cover different models: {diff}")


def _pearson(xs: list[float], ys: list[float]) -> float:
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = sum(v * v for v in dx)
    syy = sum(v * v for v in dy)
    if sxx == 0.0 or syy == 0.0:
        raise DataError("constant rank vector; correlation undefined")
    r = sum(p * q for p, q in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _exact_permutation_p(ra: list[float], rb: list[float], rho: float, alternative: str) -> float:
    n = len(ra)
    my = sum(rb) / n
    dy_pool = [y - my for y in rb]
    syy = sum(v * v for v in dy_pool)
    mx = sum(ra) / n
    dx = [x - mx for x in ra]
    denom = math.sqrt(sum(v * v for v in dx) * syy)
    hits = 0
    total = 0
    for perm in itertools.permutations(dy_pool):
        r = sum(p * q for p, q in zip(dx, perm)) / denom
        total += 1
        if alternative == "two-sided":
            hits += abs(r) >= abs(rho) - _TIE_EPS
        elif alternative == "greater":
            hits += r >= rho - _TIE_EPS
        else:
            hits += r <= rho + _TIE_EPS
    return hits / total


def _t_approximation_p(rho: float, n: int, alternative: str) -> float:
    df = n - 2
    if abs(rho) >= 1.0:
        if alternative == "two-sided":
            return 0.0
        wrong_side = (alternative == "greater") == (rho < 0)
        return 1.0 if wrong_side else 0.0
    t = rho * math.sqrt(df / (1.0 - rho * rho))
    if alternative == "two-sided":
        return min(1.0, 2.0 * float(scipy_stats.t.sf(abs(t), df)))
    if alternative == "greater":
        return float(scipy_stats.t.sf(t, df))
    return float(scipy_stats.t.cdf(t, df))


def significance_level(p_value: float) -> float | None:
    """Finest of the reported levels at which p is significant."""
    passed = [lvl for lvl in SIGNIFICANCE_LEVELS if p_value <= lvl]
    return min(passed) if passed else None


def spearman(a: Ranking, b: Ranking, alternative: str = "two-sided") -> RankCorrelation:
    """Rank correlation; exact rank-difference form when tie-free,
    Pearson on the rank vectors otherwise (recorded on the result)."""
    if alternative not in ("two-sided", "greater", "less"):
        raise DataError(f"unknown alternative: {alternative!r}")
    _require_same_ids(a, b)
    n = a.n
    if n < 3:
        raise DataError(f"need at least 3 models to correlate, got {n}")
    ids = [m for m, _ in a.items]
    ra = [a.ranks[m] for m in ids]
    rb = [b.ranks[m] for m in ids]
    d_squared = sum((x - y) ** 2 for x, y in zip(ra, rb))
    untied = list(range(1, n + 1))
    tie_free = sorted(ra) == untied and sorted(rb) == untied
    if tie_free:
        rho = 1.0 - 6.0 * d_squared / (n * (n * n - 1))
    else:
        rho = _pearson(ra, rb)
    if n <= EXACT_P_MAX_N:
        p = _exact_permutation_p(ra, rb, rho, alternative)
    else:
        p = _t_approximation_p(rho, n, alternative)
    return RankCorrelation(
        rho=rho,
        n=n,
        d_squared_sum=d_squared,
        p_value=p,
        significance_level=significance_level(p),
        tie_corrected=not tie_free,
    )


@dataclass(frozen=True)
class RegressionFit:
    degree: int
    coefficients: tuple[float, ...]  # ascending powers
    r2: float
    adjusted_r2: float
    n: int

    def predict(self, x: float) -> float:
        return sum(c * x**k for k, c in enumerate(self.coefficients))


@dataclass(frozen=True)
class RegressionReport:
    fits: tuple[RegressionFit, ...]
    best: RegressionFit


def adjusted_r2(r2: float, n: int, degree: int) -> float:
    """Degrees-of-freedom-penalized R²; negative values are meaningful
    and never clamped."""
    if n - degree - 1 <= 0:
        raise DataError(f"adjusted R² undefined for n={n}, degree={degree}")
    return 1.0 - (1.0 - r2) * (n - 1) / (n - degree - 1)


def polyfit_adjusted(xs, ys, degrees=(1, 2, 3, 4)) -> RegressionReport:
    """OLS polynomial fits per degree; best = highest adjusted R²,
    ties to the lowest degree."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("xs and ys must be equal-length 1-d sequences")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in regression input")
    degrees = tuple(sorted(set(int(d) for d in degrees)))
    if not degrees or degrees[0] < 1:
        raise DataError(f"invalid degree set: {degrees}")
    if len(x) <= max(degrees) + 1:
        raise DataError(f"need more than {max(degrees) + 1} points for degree {max(degrees)}")
    if np.ptp(x) == 0.0:
        raise DataError("constant predictor; regression is rank-deficient")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DataError("constant dependent values; R² undefined")
    fits = []
    for degree in degrees:
        # fit in the scaled domain for conditioning, report standard coefficients
        poly = np.polynomial.Polynomial.fit(x, y, degree)
        residuals = y - poly(x)
        r2 = 1.0 - float(np.sum(residuals**2)) / ss_tot
        fits.append(
            RegressionFit(
                degree=degree,
                coefficients=tuple(float(c) for c in poly.convert().coef),
                r2=r2,
                adjusted_r2=adjusted_r2(r2, len(x), degree),
                n=len(x),
            )
        )
    best = max(fits, key=lambda f: (f.adjusted_r2, -f.degree))
    return RegressionReport(fits=tuple(fits), best=best)


def top_n_hit(metric_rank: Ranking, reference_rank: Ranking, n_set=(1, 3, 5)) -> int | None:
    """Smallest N in n_set such that the metric's top model sits within
    the reference top N (competition rank, so reference ties never push
    a model out of its bucket); None when no level is hit."""
    _require_same_ids(metric_rank, reference_rank)
    if not n_set:
        raise DataError("empty N set")
    position = reference_rank.competition_rank(metric_rank.top())
    for n in sorted(n_set):
        if position <= n:
            return n
    return None


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float


def anova_single_factor(groups) -> AnovaResult:
    """Classic one-way F-test: are the group means distinguishable?"""
    samples = [tuple(float(v) for v in g) for g in groups]
    if len(samples) < 2:
        raise DataError("ANOVA needs at least two groups")
    if any(len(g) < 2 for g in samples):
        raise DataError("ANOVA needs at least two samples per group")
    for g in samples:
        if any(not math.isfinite(v) for v in g):
            raise DataError("non-finite value in ANOVA input")
    total_n = sum(len(g) for g in samples)
    grand = sum(sum(g) for g in samples) / total_n
    means = [sum(g) / len(g) for g in samples]
    ss_between = sum(len(g) * (m - grand) ** 2 for g, m in zip(samples, means))
    ss_within = sum(sum((v - m) ** 2 for v in g) for g, m in zip(samples, means))
    df_between = len(samples) - 1
    df_within = total_n - len(samples)
    if ss_within == 0.0:
        raise DataError("zero within-group variance; F is undefined")
    f_stat = (ss_between / df_between) / (ss_within / df_within)
    p = float(scipy_stats.f.sf(f_stat, df_between, df_within))
    return AnovaResult(
        f_stat=f_stat, df_between=df_between, df_within=df_within, p_value=p
    )
