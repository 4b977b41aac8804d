"""Evaluation metrics, multi-seed aggregation, and the Yuen-Welch trimmed-mean test.

The Student-t tail probability is computed here from first principles via the
regularized incomplete beta function (continued fraction), so results do not
depend on any statistics library's conventions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import EmptyEval, LengthMismatch, TooFewSamples
from .records import Polarity

DEFAULT_TRIM_GAMMA = 0.2
DEFAULT_ALPHA = 0.05

_BETACF_MAX_ITER = 400
_BETACF_EPS = 1e-16
_BETACF_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_FPMIN:
        d = _BETACF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    return h  # converged to float precision in practice long before this


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # use the tail that converges fastest, mirror the other via symmetry
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for T ~ Student-t with df degrees of freedom (df > 0)."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    p = regularized_incomplete_beta(df / 2.0, 0.5, x)
    return min(max(p, 0.0), 1.0)


def student_t_cdf(t: float, df: float) -> float:
    p = student_t_two_sided_p(abs(t), df)
    return 1.0 - p / 2.0 if t >= 0 else p / 2.0


# ---------------------------------------------------------------------------
# metrics


def macro_f1(predictions: Sequence[Polarity | None], golds: Sequence[Polarity]) -> float:
    """Macro-averaged F1 x100 over the classes present in golds or predictions.

    A prediction of None (unparseable model output) counts as a wrong
    prediction for the gold class and never forms a class of its own.
    Computed in exact rational arithmetic and rounded once at the end, so the
    score does not depend on class iteration order.
    """
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not golds:
        raise EmptyEval("empty evaluation set")
    classes = set(golds) | {p for p in predictions if p is not None}
    tp: dict[Polarity, int] = {c: 0 for c in classes}
    fp: dict[Polarity, int] = {c: 0 for c in classes}
    fn: dict[Polarity, int] = {c: 0 for c in classes}
    for pred, gold in zip(predictions, golds):
        if pred == gold:
            tp[gold] += 1
        else:
            fn[gold] += 1
            if pred is not None:
                fp[pred] += 1
    f1_sum = Fraction(0)
    for c in classes:
        prec = Fraction(tp[c], tp[c] + fp[c]) if tp[c] + fp[c] > 0 else Fraction(0)
        rec = Fraction(tp[c], tp[c] + fn[c]) if tp[c] + fn[c] > 0 else Fraction(0)
        if prec + rec > 0:
            f1_sum += 2 * prec * rec / (prec + rec)
    return float(100 * f1_sum / len(classes))


_ARTICLE_RE = re.compile(r"^(the|a|an)\s+", re.IGNORECASE)


def normalize_antecedent(text: str) -> str:
    """Lowercase, trim, collapse whitespace, strip one leading article."""
    text = " ".join(text.strip().split()).lower()
    return _ARTICLE_RE.sub("", text)


def dpr_score(predictions: Sequence[str], golds: Sequence[str], exact: bool = False) -> float:
    """Percent of predicted antecedents matching gold under normalization."""
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not golds:
        raise EmptyEval("empty evaluation set")
    if exact:
        correct = sum(1 for p, g in zip(predictions, golds) if p == g)
    else:
        correct = sum(
            1 for p, g in zip(predictions, golds)
            if normalize_antecedent(p) == normalize_antecedent(g)
        )
    return 100.0 * correct / len(golds)


def aggregate(scores: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n-1 denominator)."""
    n = len(scores)
    if n < 2:
        raise TooFewSamples(f"need at least 2 scores, got {n}")
    mean = sum(scores) / n
    var = sum((s - mean) ** 2 for s in scores) / (n - 1)
    return mean, math.sqrt(var)


# ---------------------------------------------------------------------------
# Yuen-Welch trimmed-mean test


@dataclass(frozen=True)
class StatResult:
    group_a: str
    group_b: str
    mean_a: float
    mean_b: float
    std_a: float
    std_b: float
    n_a: int
    n_b: int
    trim_gamma: float
    t_stat: float
    deg_freedom: float
    p_value: float
    alpha: float
    significant: bool
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "group_a": self.group_a,
            "group_b": self.group_b,
            "mean_a": self.mean_a,
            "mean_b": self.mean_b,
            "std_a": self.std_a,
            "std_b": self.std_b,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "trim_gamma": self.trim_gamma,
            "t_stat": self.t_stat,
            "deg_freedom": self.deg_freedom,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "significant": self.significant,
            "degenerate": self.degenerate,
        }


def _trim_counts(n: int, gamma: float) -> tuple[int, int]:
    g = math.floor(gamma * n)
    return g, n - 2 * g


def _winsorized_sample_variance(sorted_vals: list[float], g: int) -> float:
    n = len(sorted_vals)
    wins = (
        [sorted_vals[g]] * g + sorted_vals[g:n - g] + [sorted_vals[n - g - 1]] * g
        if g > 0
        else list(sorted_vals)
    )
    mean = sum(wins) / n
    return sum((v - mean) ** 2 for v in wins) / (n - 1)


def yuen_welch(
    x: Sequence[float],
    y: Sequence[float],
    trim_gamma: float = DEFAULT_TRIM_GAMMA,
    alpha: float = DEFAULT_ALPHA,
    group_a: str = "a",
    group_b: str = "b",
) -> StatResult:
    """Two-sided Yuen-Welch test comparing trimmed means of two samples.

    With trim_gamma=0 this reduces exactly to the Welch unequal-variance
    t-test. Zero pooled winsorized variance is degenerate: unequal trimmed
    means give p=0, equal ones t=0 and p=1, both flagged in the result.
    """
    if not 0.0 <= trim_gamma <= 0.25:
        raise ValueError(f"trim_gamma must be in [0, 0.25], got {trim_gamma}")
    n1, n2 = len(x), len(y)
    g1, h1 = _trim_counts(n1, trim_gamma)
    g2, h2 = _trim_counts(n2, trim_gamma)
    if n1 < 5 or n2 < 5 or h1 < 2 or h2 < 2:
        raise TooFewSamples(
            f"need n >= 5 and n - 2*floor(gamma*n) >= 2 per sample, got n=({n1},{n2}) h=({h1},{h2})"
        )
    xs, ys = sorted(x), sorted(y)
    tmean1 = sum(xs[g1:n1 - g1]) / h1
    tmean2 = sum(ys[g2:n2 - g2]) / h2
    d1 = (n1 - 1) * _winsorized_sample_variance(xs, g1) / (h1 * (h1 - 1))
    d2 = (n2 - 1) * _winsorized_sample_variance(ys, g2) / (h2 * (h2 - 1))

    mean_a, std_a = aggregate(x)
    mean_b, std_b = aggregate(y)

    pooled = d1 + d2
    if pooled == 0.0:
        equal = tmean1 == tmean2
        return StatResult(
            group_a=group_a, group_b=group_b,
            mean_a=mean_a, mean_b=mean_b, std_a=std_a, std_b=std_b,
            n_a=n1, n_b=n2, trim_gamma=trim_gamma,
            t_stat=0.0 if equal else math.copysign(math.inf, tmean1 - tmean2),
            deg_freedom=float(h1 + h2 - 2),
            p_value=1.0 if equal else 0.0,
            alpha=alpha,
            significant=not equal,
            degenerate=True,
        )

    t_stat = (tmean1 - tmean2) / math.sqrt(pooled)
    df = pooled ** 2 / (d1 ** 2 / (h1 - 1) + d2 ** 2 / (h2 - 1))
    p = student_t_two_sided_p(t_stat, df)
    return StatResult(
        group_a=group_a, group_b=group_b,
        mean_a=mean_a, mean_b=mean_b, std_a=std_a, std_b=std_b,
        n_a=n1, n_b=n2, trim_gamma=trim_gamma,
        t_stat=t_stat, deg_freedom=df, p_value=p,
        alpha=alpha, significant=p < alpha,
    )


# ---------------------------------------------------------------------------
# per-pronoun error analysis

MIN_ANALYSED_COUNT = 15  # pronouns must occur in more than this many test instances


@dataclass(frozen=True)
class PronounAccuracy:
    pronoun: str
    count: int
    accuracy_pct: float | None  # None when the pronoun never occurs
    analysed: bool


def accuracy_by_pronoun(
    correct_flags: Sequence[bool],
    instance_pronouns: Sequence[Sequence[str]],
    lexicon_order: Sequence[str],
) -> list[PronounAccuracy]:
    """Per-pronoun accuracy over evaluated instances.

    Each instance contributes once to every distinct pronoun form it contains.
    Pronouns occurring in at most MIN_ANALYSED_COUNT instances are listed but
    flagged as not analysed; zero-count pronouns report accuracy None.
    """
    if len(correct_flags) != len(instance_pronouns):
        raise LengthMismatch(
            f"{len(correct_flags)} flags vs {len(instance_pronouns)} pronoun sets"
        )
    counts = {p: 0 for p in lexicon_order}
    correct = {p: 0 for p in lexicon_order}
    for ok, pronouns in zip(correct_flags, instance_pronouns):
        for p in set(pronouns):
            if p in counts:
                counts[p] += 1
                if ok:
                    correct[p] += 1
    rows = []
    for p in lexicon_order:
        n = counts[p]
        acc = 100.0 * correct[p] / n if n > 0 else None
        rows.append(PronounAccuracy(p, n, acc, n > MIN_ANALYSED_COUNT))
    return rows
