"""Distribution analysis for option-set construction.

Analytic quantities: the chance a training question has a causally related
answer (X/N), the chance a size-D option draw misses every related event
(C(Y,D)/C(N,D), computed as a product of ratios), the resulting test-time
chance, and the approximate samples-per-event count. A Monte Carlo estimator
cross-checks the test-time formula, and measure_corpus compares the analytic
values against proportions measured on an actual corpus.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .corpus import Document
from .mcq import MODE_TEST, MODE_TRAIN, BuilderConfig, build_split


class StatsDomainError(ValueError):
    """Arguments outside the supported domain."""


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise StatsDomainError(msg)


def _is_integral(v: float) -> bool:
    return float(v).is_integer()


def p_train(n: float, x: float) -> float:
    _check(n > 0, f"n must be > 0, got {n}")
    _check(0 <= x <= n, f"x must be in [0, n], got x={x}, n={n}")
    return x / n


def none_ratio(n: float, y: float, d: int) -> float:
    """C(y,d)/C(n,d) as a telescoping product; exact for integer arguments."""
    _check(n > 0, f"n must be > 0, got {n}")
    _check(0 <= y <= n, f"y must be in [0, n], got y={y}, n={n}")
    _check(isinstance(d, int) and d >= 1, f"d must be an integer >= 1, got {d}")
    _check(d <= n, f"d must be <= n, got d={d}, n={n}")
    if y < d:
        return 0.0
    if _is_integral(n) and _is_integral(y):
        ratio = Fraction(1)
        for k in range(d):
            ratio *= Fraction(int(y) - k, int(n) - k)
        return float(ratio)
    ratio = 1.0
    for k in range(d):
        ratio *= (y - k) / (n - k)
    return ratio


def p_test(n: float, x: float, d: int) -> float:
    return p_train(n, x) * (1.0 - none_ratio(n, n - x, d))


def m_approx(n: float, d: int) -> float:
    """Approximate option sets per observed event: (1/n)·Σ_{i=1..⌊n/d⌋} d·i."""
    _check(isinstance(d, int) and d >= 1, f"d must be an integer >= 1, got {d}")
    _check(n >= d, f"n must be >= d, got n={n}, d={d}")
    k = math.floor(n / d)
    return d * k * (k + 1) / 2 / n


@dataclass(frozen=True)
class StatsReport:
    n: float
    x: float
    y: float
    d: int
    p_train: float
    p_none_ratio: float
    p_test: float
    m: float
    expected_train_samples: float
    expected_test_samples: float

    def to_dict(self) -> dict:
        return asdict(self)


def analytic_report(n: float, x: float, d: int) -> StatsReport:
    y = n - x
    pt = p_train(n, x)
    ratio = none_ratio(n, y, d)
    m = m_approx(n, d) if n >= d else 0.0
    return StatsReport(
        n=n,
        x=x,
        y=y,
        d=d,
        p_train=pt,
        p_none_ratio=ratio,
        p_test=pt * (1.0 - ratio),
        m=m,
        expected_train_samples=float(n),
        expected_test_samples=float(n) * m,
    )


def monte_carlo_p_test(n: int, x: int, d: int, trials: int, seed: int = 0) -> float:
    """Estimate p_test by simulation.

    Per trial: mark x of n events as related, pick an observed event
    uniformly, draw an option set of d events uniformly; the trial counts
    when the observed event is related and the option set contains at least
    one related event.
    """
    _check(isinstance(n, int) and n > 0, f"n must be an integer > 0, got {n}")
    _check(isinstance(x, int) and 0 <= x <= n, f"x must be in [0, n], got {x}")
    _check(isinstance(d, int) and 1 <= d <= n, f"d must be in [1, n], got {d}")
    _check(trials >= 1, f"trials must be >= 1, got {trials}")
    if x == 0:
        return 0.0
    if x == n:
        return 1.0

    rng = np.random.default_rng(seed)
    batch_rows = max(1, 2_000_000 // n)
    hits = 0
    done = 0
    while done < trials:
        b = min(batch_rows, trials - done)
        related = np.zeros((b, n), dtype=bool)
        marks = np.argsort(rng.random((b, n)), axis=1)[:, :x]
        np.put_along_axis(related, marks, True, axis=1)
        option_cols = np.argsort(rng.random((b, n)), axis=1)[:, :d]
        observed = rng.integers(0, n, size=b)
        obs_related = np.take_along_axis(related, observed[:, None], axis=1)[:, 0]
        opt_related = np.take_along_axis(related, option_cols, axis=1).any(axis=1)
        hits += int(np.count_nonzero(obs_related & opt_related))
        done += b
    return hits / trials


def _doc_related_count(doc: Document) -> int:
    linked: set[str] = set()
    for link in doc.causal_links:
        linked.add(link.cause)
        linked.add(link.effect)
    return len(linked)


def _non_none_fraction(samples) -> float:
    if not samples:
        return 0.0
    hit = sum(1 for s in samples if s.gold_letters != frozenset({s.none_letter}))
    return hit / len(samples)


def measure_corpus(docs: list[Document], cfg: BuilderConfig) -> dict:
    """Analytic report from corpus averages, next to measured proportions.

    The builder considers only events after the observed one, so measured
    train proportions sit slightly below x/n; the gap is reported, not
    corrected.
    """
    _check(len(docs) > 0, "corpus is empty")
    total_events = sum(len(doc.events) for doc in docs)
    _check(total_events > 0, "corpus has no events")
    mean_n = total_events / len(docs)
    mean_x = sum(_doc_related_count(doc) for doc in docs) / len(docs)

    analytic = analytic_report(mean_n, mean_x, cfg.num_options)
    train = build_split(docs, MODE_TRAIN, cfg)
    test = build_split(docs, MODE_TEST, cfg)
    measured_train = _non_none_fraction(train)
    measured_test = _non_none_fraction(test)

    return {
        "documents": len(docs),
        "total_events": total_events,
        "analytic": analytic.to_dict(),
        "measured": {
            "train_samples": len(train),
            "test_samples": len(test),
            "train_non_none_fraction": measured_train,
            "test_non_none_fraction": measured_test,
        },
        "gaps": {
            "train": abs(measured_train - analytic.p_train),
            "test": abs(measured_test - analytic.p_test),
        },
    }
