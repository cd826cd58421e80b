"""Phase-error formulas, their inconsistency exhibit, and seeded scans.

Two privacy-amplification formulas are evaluated at the pair-harvesting
attack's operating point (L = n pulses, (n-1)/2 photons): the original
linear form saturates at 1/2 (no key), while the improved form stays
strictly below 1/2 and so promises key where the attack in fact hands
the eavesdropper every announced bit at zero error.  The Monte Carlo
scanners back the two simulation claims behind the attack: near-critical
random graphs grow a large connected component, and a few hundred
members' pairwise differences cover almost every possible delay.

All confidence statements use the exact Clopper-Pearson construction;
scan trials draw independent per-index streams so thread count never
changes a result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.stats import beta

from .errors import ParameterError
from .seeding import map_trials, subseed

IMPROVED_LIMIT = float((1.0 - np.exp(-1.0)) / 2.0)  # large-n value at the critical point

# G(n, p) sampling materialises the closed pair list; cap how large that may get
_MAX_DENSE_PAIRS = 50_000_000


def phase_error_original(L: int, n_ph: int) -> float:
    """Linear phase-error estimate n_ph / (L - 1)."""
    if L < 2:
        raise ParameterError(f"L must be >= 2, got {L}")
    if n_ph < 0:
        raise ParameterError("photon number must be >= 0")
    if n_ph > L - 1:
        raise ParameterError(f"n_ph={n_ph} exceeds L-1={L - 1}; estimate undefined")
    return n_ph / (L - 1)


def phase_error_improved(L: int, n_ph: int) -> float:
    """Refined estimate [1 - (1 - 2/L)**n_ph] / 2 (odd-flip counting)."""
    if L < 2:
        raise ParameterError(f"L must be >= 2, got {L}")
    if n_ph < 0:
        raise ParameterError("photon number must be >= 0")
    return (1.0 - (1.0 - 2.0 / L) ** n_ph) / 2.0


@dataclass(frozen=True)
class ContradictionReport:
    """Both formulas at the attack's operating point for train length n."""

    n: int
    n_ph: int
    original: float
    improved: float
    improved_limit: float
    contradiction: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n, "n_ph": self.n_ph,
            "original": self.original, "improved": self.improved,
            "improved_limit": self.improved_limit,
            "contradiction": self.contradiction,
        }


def contradiction_report(n: int) -> ContradictionReport:
    """Evaluate both formulas at L = n, n_ph = (n-1)/2.

    The original form returns exactly 1/2 (no key, consistent with the
    attack); the improved form stays below 1/2, promising key that the
    attack demonstrably compromises, hence the flag.
    """
    if n < 3 or n % 2 == 0:
        raise ParameterError(f"n must be odd and >= 3, got {n}")
    n_ph = (n - 1) // 2
    original = phase_error_original(n, n_ph)
    improved = phase_error_improved(n, n_ph)
    return ContradictionReport(n, n_ph, original, improved, IMPROVED_LIMIT,
                               contradiction=improved < original)


def remark_upper_bound(c: float) -> float:
    """Large-n ceiling 1 - 1/c**3 + 1/c**4 on expected difference coverage
    when only c*sqrt(n) members are drawn."""
    if c <= 1.0:
        raise ParameterError(f"c must be > 1, got {c}")
    return 1.0 - c ** -3 + c ** -4


def clopper_pearson_lower(successes: int, trials: int, confidence: float = 0.99) -> float:
    """Exact one-sided lower confidence bound for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ParameterError(f"bad counts ({successes}, {trials})")
    if not 0.0 < confidence < 1.0:
        raise ParameterError("confidence must be in (0, 1)")
    if successes == 0:
        return 0.0
    return float(beta.ppf(1.0 - confidence, successes, trials - successes + 1))


def clopper_pearson_interval(successes: int, trials: int,
                             confidence: float = 0.99) -> tuple[float, float]:
    """Exact two-sided interval (equal tails)."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ParameterError(f"bad counts ({successes}, {trials})")
    alpha = 1.0 - confidence
    lo = 0.0 if successes == 0 else float(
        beta.ppf(alpha / 2, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(
        beta.ppf(1.0 - alpha / 2, successes + 1, trials - successes))
    return lo, hi


@dataclass
class ScanReport:
    """Per-trial statistics plus the exact-binomial claim summary."""

    kind: str
    params: dict
    seed: int
    trials: int
    samples: list
    threshold: float | None
    confidence: float
    successes: int | None
    lower_bound: float | None
    median: float
    mean: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "params": dict(self.params), "seed": self.seed,
            "trials": self.trials, "threshold": self.threshold,
            "confidence": self.confidence, "successes": self.successes,
            "lower_bound": self.lower_bound,
            "median": self.median, "mean": self.mean,
        }


def _summarise(kind: str, params: dict, seed: int, samples: list,
               threshold: float | None, confidence: float) -> ScanReport:
    arr = np.asarray(samples, dtype=float)
    successes = lower = None
    if threshold is not None:
        successes = int(np.count_nonzero(arr >= threshold))
        lower = clopper_pearson_lower(successes, len(samples), confidence)
    return ScanReport(kind, params, seed, len(samples), list(samples), threshold,
                      confidence, successes, lower,
                      float(np.median(arr)), float(arr.mean()))


def _uniform_pairs(n: int, count: int, rng: np.random.Generator):
    """``count`` unordered pairs drawn uniformly with replacement (0-based)."""
    i = rng.integers(0, n, size=count)
    j = rng.integers(0, n - 1, size=count)
    j = j + (j >= i)
    return np.minimum(i, j), np.maximum(i, j)


def _gnp_pairs(n: int, p: float, rng: np.random.Generator):
    """Distinct edge sample of the Bernoulli random graph G(n, p)."""
    total = n * (n - 1) // 2
    if total > _MAX_DENSE_PAIRS:
        raise ParameterError(
            f"G(n, p) sampling materialises {total} pairs; use the edge-count model")
    count = int(rng.binomial(total, p))
    row, col = np.triu_indices(n, 1)
    chosen = rng.choice(total, size=count, replace=False)
    return row[chosen], col[chosen]


def largest_component_size(n: int, rows: np.ndarray, cols: np.ndarray) -> int:
    if len(rows) == 0:
        return 1 if n >= 1 else 0
    graph = sparse.coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                              shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return int(np.bincount(labels).max())


def _component_trial(index, rng, *, n, p, M):
    if M is not None:
        rows, cols = _uniform_pairs(n, M, rng)
    else:
        rows, cols = _gnp_pairs(n, p, rng)
    return largest_component_size(n, rows, cols)


def component_scan(n: int, *, p: float | None = None, M: int | None = None,
                   threshold: float | None = None, trials: int = 1000,
                   seed: int = 0, threads: int = 1,
                   confidence: float = 0.99) -> ScanReport:
    """Largest-component sizes of random graphs over seeded trials.

    Exactly one edge model applies: ``p`` samples each of the C(n, 2)
    edges independently (Bernoulli); ``M`` draws that many uniform pairs
    with replacement, the model induced by the harvest (duplicate edges
    collapse).  With a threshold, reports the exact lower confidence
    bound for P(size >= threshold).
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if (p is None) == (M is None):
        raise ParameterError("give exactly one of p or M")
    if p is not None and not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must be in [0, 1], got {p}")
    if M is not None and M < 0:
        raise ParameterError(f"M must be >= 0, got {M}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if M is not None and M == 0:
        samples = [1 if n >= 1 else 0] * trials
    else:
        fn = partial(_component_trial, n=n, p=p, M=M)
        samples = map_trials(fn, trials, seed, threads)
    params = {"n": n, "p": p, "M": M}
    return _summarise("largest-component", params, seed, samples, threshold, confidence)


def coverage_fraction(members: np.ndarray, n: int) -> float:
    """Fraction of {1..n-1} realised as pairwise differences of ``members``."""
    arr = np.unique(np.asarray(members, dtype=np.int64))
    if arr.size < 2:
        return 0.0
    diffs = (arr[None, :] - arr[:, None])[np.triu_indices(arr.size, 1)]
    return len(np.unique(diffs)) / (n - 1)


def _coverage_trial(index, rng, *, m, n, distinct):
    if distinct:
        members = rng.choice(n, size=m, replace=False) + 1
    else:
        members = rng.integers(1, n + 1, size=m)
    return coverage_fraction(members, n)


def coverage_scan(m: int, n: int, *, threshold: float | None = None,
                  trials: int = 1000, seed: int = 0, threads: int = 1,
                  distinct: bool = False, confidence: float = 0.99) -> ScanReport:
    """Difference coverage of m members drawn from {1..n}, over trials.

    Default draws are with replacement then deduplicated (the harvest's
    behaviour); ``distinct`` switches to sampling without replacement,
    which makes m = n a coverage-1 sanity case.
    """
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if m > n:
        raise ParameterError(f"m={m} exceeds n={n}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    fn = partial(_coverage_trial, m=m, n=n, distinct=distinct)
    samples = map_trials(fn, trials, seed, threads)
    params = {"m": m, "n": n, "distinct": distinct}
    return _summarise("difference-coverage", params, seed, samples, threshold, confidence)


@dataclass
class ScalingFit:
    """Log-log fit of median largest-component size against n at the
    critical edge count M = (n-1)/2."""

    ns: list
    medians: list
    exponent: float
    intercept: float
    reports: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {"ns": list(self.ns), "medians": list(self.medians),
                "exponent": self.exponent, "intercept": self.intercept}


def fit_exponent(ns, values) -> tuple[float, float]:
    if len(ns) < 2:
        raise ParameterError("need at least two sizes to fit an exponent")
    slope, intercept = np.polyfit(np.log(np.asarray(ns, dtype=float)),
                                  np.log(np.asarray(values, dtype=float)), 1)
    return float(slope), float(intercept)


def critical_scaling_scan(ns, trials: int, seed: int, threads: int = 1) -> ScalingFit:
    """Medians of the largest component at M = (n-1)/2 for each n, with a
    fitted growth exponent (medians tame the critical regime's heavy tails)."""
    ns = sorted(int(n) for n in ns)
    reports = [component_scan(n, M=(n - 1) // 2, trials=trials,
                              seed=subseed(seed, idx), threads=threads)
               for idx, n in enumerate(ns)]
    medians = [r.median for r in reports]
    slope, intercept = fit_exponent(ns, medians)
    return ScalingFit(ns, medians, slope, intercept, reports)
