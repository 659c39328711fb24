"""Randomized keyword aggregation with 2-bit randomized response.

Each client reports, once per vocabulary word, a perturbed pair of bits: bit 1
starts set for words the user marked sensitive, bit 2 otherwise. Every bit is
then forced to 1 with probability p/2, forced to 0 with probability p/2, and
kept with probability 1 - p. The server counts reports with bit 1 set and
inverts the perturbation to estimate how many users really marked the word.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve
from scipy.stats import binom

_BOUND_GUARD = 1e-9  # keeps ceil/floor from tipping on exact integers
_DIRECT_CONVOLVE_MAX = 4096


class ProtocolError(RuntimeError):
    pass


def _check_p(p: float, allow_one: bool = True) -> float:
    p = float(p)
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if not allow_one and p == 1.0:
        raise ValueError("the estimator is undefined at p = 1")
    return p


@dataclass(frozen=True)
class KeywordReport:
    word: str
    b1: int
    b2: int

    def __post_init__(self):
        if self.b1 not in (0, 1) or self.b2 not in (0, 1):
            raise ValueError("report bits must be 0 or 1")

    @property
    def bits(self) -> tuple[int, int]:
        return self.b1, self.b2

    def to_json(self) -> str:
        return json.dumps({"word": self.word, "b1": self.b1, "b2": self.b2})

    @classmethod
    def from_dict(cls, d: dict) -> "KeywordReport":
        return cls(str(d["word"]), int(d["b1"]), int(d["b2"]))


@dataclass(frozen=True)
class AggregateEstimate:
    word: str
    N: int
    n: int
    n_hat: float
    epsilon: float

    def to_dict(self) -> dict:
        return {"word": self.word, "N": self.N, "n": self.n, "n_hat": self.n_hat,
                "epsilon": self.epsilon}


# ---------------------------------------------------------------------------
# client side
# ---------------------------------------------------------------------------

def perturb_bits(bits, p: float, rng: np.random.Generator) -> tuple[int, int]:
    """Keep each bit with prob. 1 - p, otherwise replace it by a fair coin."""
    p = _check_p(p)
    u = rng.random(2)
    coin = rng.random(2) < 0.5
    out = tuple(int(c) if ui < p else int(b) for b, ui, c in zip(bits, u, coin))
    return out  # type: ignore[return-value]


def make_report(word: str, is_sensitive: bool, p: float, rng: np.random.Generator,
                reported: set | None = None, vocabulary=None) -> KeywordReport:
    """One perturbed report for ``word``.

    ``reported`` is the caller's record of words already reported; a second
    report for the same word raises :class:`ProtocolError`, and the word is
    added on success.
    """
    if vocabulary is not None and word not in vocabulary:
        raise ValueError(f"{word!r} is not in the vocabulary")
    if reported is not None and word in reported:
        raise ProtocolError(f"a report for {word!r} was already sent")
    b = (1, 0) if is_sensitive else (0, 1)
    b1, b2 = perturb_bits(b, p, rng)
    if reported is not None:
        reported.add(word)
    return KeywordReport(word, b1, b2)


class PrakaClient:
    """Per-user reporter that remembers (optionally on disk) which words it has sent."""

    def __init__(self, vocabulary, sensitive=(), p: float = 0.5,
                 rng: np.random.Generator | None = None, state_path=None):
        self.vocabulary = list(dict.fromkeys(vocabulary))
        self.sensitive = set(sensitive)
        unknown = self.sensitive - set(self.vocabulary)
        if unknown:
            raise ValueError(f"sensitive words outside the vocabulary: {sorted(unknown)}")
        self.p = _check_p(p)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state_path = Path(state_path) if state_path is not None else None
        self.reported: set = set()
        if self.state_path is not None and self.state_path.is_file():
            self.reported = set(json.loads(self.state_path.read_text(encoding="utf-8")))

    def _save(self) -> None:
        if self.state_path is not None:
            self.state_path.write_text(json.dumps(sorted(self.reported)), encoding="utf-8")

    def report(self, word: str) -> KeywordReport:
        r = make_report(word, word in self.sensitive, self.p, self.rng, self.reported,
                        self.vocabulary)
        self._save()
        return r

    def report_all(self) -> list[KeywordReport]:
        """Reports for every vocabulary word not yet reported."""
        out = [make_report(w, w in self.sensitive, self.p, self.rng, self.reported)
               for w in self.vocabulary if w not in self.reported]
        self._save()
        return out


# ---------------------------------------------------------------------------
# privacy accounting
# ---------------------------------------------------------------------------

def epsilon(p: float) -> float:
    """Privacy loss 2 ln((2 - p) / p) of one report."""
    p = _check_p(p)
    return 2.0 * math.log((2.0 - p) / p)


def output_probability(out_bits, in_bits, p: float) -> float:
    q = p / 2.0
    prob = 1.0
    for o, i in zip(out_bits, in_bits):
        prob *= (1.0 - q) if o == i else q
    return prob


def verify_dp(p: float) -> float:
    """Largest probability ratio between the two possible inputs over all outputs."""
    p = _check_p(p)
    b_other, b_sens = (0, 1), (1, 0)
    worst = 0.0
    for out in ((0, 0), (0, 1), (1, 0), (1, 1)):
        p1 = output_probability(out, b_other, p)
        p2 = output_probability(out, b_sens, p)
        worst = max(worst, p1 / p2, p2 / p1)
    return worst


# ---------------------------------------------------------------------------
# server side
# ---------------------------------------------------------------------------

def estimate_count(n: float, N: int, p: float) -> float:
    p = _check_p(p, allow_one=False)
    return (n - 0.5 * p * N) / (1.0 - p)


def count_reports(reports) -> dict:
    """word -> (N, n) counters; these merge by addition across shards."""
    acc: dict = defaultdict(lambda: [0, 0])
    for r in reports:
        c = acc[r.word]
        c[0] += 1
        c[1] += r.b1
    return {w: (N, n) for w, (N, n) in acc.items()}


def aggregate(reports, p: float) -> list[AggregateEstimate]:
    """Unclamped frequency estimate per word, in first-seen order."""
    p = _check_p(p, allow_one=False)
    eps = epsilon(p)
    return [AggregateEstimate(w, N, n, estimate_count(n, N, p), eps)
            for w, (N, n) in count_reports(reports).items()]


# ---------------------------------------------------------------------------
# exact error distribution
# ---------------------------------------------------------------------------

def count_pmf(N: int, n0: int, p: float) -> np.ndarray:
    """PMF of the bit-1 count ``n`` over k = 0..N when ``n0`` users are truly sensitive.

    ``n`` is Binomial(N - n0, p/2) plus Binomial(n0, 1 - p/2); the two PMFs are
    evaluated from log-gamma terms and convolved.
    """
    N, n0 = int(N), int(n0)
    if not 0 <= n0 <= N:
        raise ValueError("need 0 <= n0 <= N")
    p = _check_p(p)
    q = p / 2.0
    fx = binom.pmf(np.arange(N - n0 + 1), N - n0, q)
    fy = binom.pmf(np.arange(n0 + 1), n0, 1.0 - q)
    if min(fx.size, fy.size) <= _DIRECT_CONVOLVE_MAX:
        pmf = np.convolve(fx, fy)
    else:
        pmf = np.clip(fftconvolve(fx, fy), 0.0, None)
    return pmf


def error_bound_range(N: int, n0: int, p: float, eps: float) -> tuple[int, int]:
    """Inclusive range of counts ``n`` whose estimate lies within ``eps`` of ``n0``."""
    p = _check_p(p, allow_one=False)
    if not eps >= 0:
        raise ValueError("eps must be nonnegative")
    lo = (1.0 - p) * (n0 - eps) + 0.5 * p * N
    hi = (1.0 - p) * (n0 + eps) + 0.5 * p * N
    return math.ceil(lo - _BOUND_GUARD), math.floor(hi + _BOUND_GUARD)


def error_bound(N: int, n0: int, p: float, eps: float) -> float:
    """Exact Pr(|n_hat - n0| <= eps)."""
    N, n0 = int(N), int(n0)
    if N < 0 or not 0 <= n0 <= N:
        raise ValueError("need 0 <= n0 <= N")
    k_lo, k_hi = error_bound_range(N, n0, p, eps)
    k_lo, k_hi = max(k_lo, 0), min(k_hi, N)
    if k_lo > k_hi:
        return 0.0
    pmf = count_pmf(N, n0, p)
    return float(min(1.0, pmf[k_lo : k_hi + 1].sum()))


def error_quantile(N: int, n0: int, p: float, confidence: float = 0.95) -> float:
    """Smallest eps on the attainable grid with error_bound >= ``confidence``."""
    if not 0 < confidence <= 1:
        raise ValueError("confidence must lie in (0, 1]")
    p = _check_p(p, allow_one=False)
    pmf = count_pmf(N, n0, p)
    k = np.arange(pmf.size)
    err = np.abs((k - 0.5 * p * N) / (1.0 - p) - n0)
    order = np.argsort(err, kind="stable")
    cum = np.cumsum(pmf[order])
    idx = int(np.searchsorted(cum, confidence - 1e-12))
    return float(err[order][min(idx, err.size - 1)])


# ---------------------------------------------------------------------------
# simulation and files
# ---------------------------------------------------------------------------

def simulate_reports(vocabulary, sensitive_counts: dict, num_users: int, p: float,
                     rng: np.random.Generator) -> list[KeywordReport]:
    """Every user reports every word; ``sensitive_counts[w]`` users mark ``w``."""
    reports = []
    for w in vocabulary:
        n0 = int(sensitive_counts.get(w, 0))
        if not 0 <= n0 <= num_users:
            raise ValueError(f"sensitive count for {w!r} outside [0, {num_users}]")
        for u in range(num_users):
            reports.append(make_report(w, u < n0, p, rng))
    return reports


def load_vocabulary(path) -> list[str]:
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        w = line.strip()
        if w and w not in words:
            words.append(w)
    if not words:
        raise ValueError(f"vocabulary file {path} is empty")
    return words


def write_reports(reports, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")


def read_reports(path) -> list[KeywordReport]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(KeywordReport.from_dict(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad report line ({exc})") from exc
    return out
