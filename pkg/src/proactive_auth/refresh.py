"""Sparse randomized refresh for the k-private-of-n setting, plus coverage and audit tools."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import RefreshVector, SecretVector, key_entry_index
from .padstream import PadStream


class RefreshMode(str, enum.Enum):
    DENSE = "dense"
    SPARSE_RANDOM = "sparse-random"


def default_refresh_count(n: int) -> int:
    return min(n, max(1, math.ceil(2 * math.log2(n))))


@dataclass(frozen=True)
class RefreshPolicy:
    mode: RefreshMode = RefreshMode.DENSE
    per_session_count: int | None = None
    k_private: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", RefreshMode(self.mode))
        if self.k_private < 1:
            raise ValueError("k_private must be at least 1")
        if self.per_session_count is not None and self.per_session_count < 1:
            raise ValueError("per_session_count must be at least 1")

    @classmethod
    def sparse(cls, n: int, r: int | None = None, k_private: int = 1) -> RefreshPolicy:
        pol = cls(RefreshMode.SPARSE_RANDOM, default_refresh_count(n) if r is None else r, k_private)
        pol.check(n)
        return pol

    @property
    def is_dense(self) -> bool:
        return self.mode is RefreshMode.DENSE

    def count(self, n: int) -> int:
        if self.is_dense:
            return n
        return default_refresh_count(n) if self.per_session_count is None else self.per_session_count

    def check(self, n: int) -> None:
        if self.k_private > n:
            raise ValueError(f"k_private={self.k_private} exceeds n={n}")
        if not 1 <= self.count(n) <= n:
            raise ValueError(f"per-session refresh count must be in 1..{n}")

    def pcf(self, n: int) -> float:
        """Privacy fraction n / k_private."""
        return n / self.k_private


DENSE = RefreshPolicy()


def choose_refresh_set(rng: PadStream, n: int, r: int) -> tuple[int, ...]:
    """A uniformly random r-subset of 1..n (partial Fisher-Yates), returned sorted."""
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    pool = list(range(1, n + 1))
    for k in range(r):
        j = k + rng.next_below(n - k)
        pool[k], pool[j] = pool[j], pool[k]
    return tuple(sorted(pool[:r]))


def draw_sparse_refresh(rng: PadStream, n: int, width: int, r: int) -> RefreshVector:
    idx = choose_refresh_set(rng, n, r)
    return RefreshVector.sparse(((i, rng.next_bits(width).value) for i in idx), n, width)


def apply_sparse_refresh(arv: SecretVector, keyentry: int, pairs: RefreshVector) -> SecretVector:
    """Zero the used entry, then xor each (index, value) pair into the vector."""
    if pairs.is_dense:
        raise ValueError("expected a sparse refresh vector")
    if pairs.n != arv.n:
        raise ValueError("refresh vector is for a different n")
    if not 1 <= keyentry <= arv.n:
        raise IndexError(keyentry)
    e = list(arv.entries)
    e[keyentry - 1] = 0
    for idx, val in pairs.pairs:
        e[idx - 1] ^= val
    return SecretVector(tuple(e), arv.width)


# -- coverage ---------------------------------------------------------------


@dataclass(frozen=True)
class CoverageEstimate:
    n: int
    r: int
    sessions: int
    trials: int
    estimate: float
    stderr: float
    per_entry_miss_rate: float
    per_entry_miss_stderr: float

    @property
    def bound(self) -> float:
        """Lower bound 1 - 1/n on the probability that every entry is refreshed."""
        return 1.0 - 1.0 / self.n

    @property
    def miss_bound(self) -> float:
        return (1.0 - 1.0 / self.n) ** (self.r * self.sessions)


def coverage_probability(
    n: int, r: int, sessions: int, trials: int = 100_000, seed: int = 0, chunk: int = 1024
) -> CoverageEstimate:
    """Monte Carlo estimate of Pr[every entry refreshed at least once in ``sessions`` sessions].

    Each session refreshes a uniform r-subset of the n entries (the r smallest of
    n i.i.d. uniforms).
    """
    if min(n, r, sessions, trials) < 1 or r > n:
        raise ValueError("need positive n, r, sessions, trials and r <= n")
    rng = np.random.default_rng(seed)
    all_covered = 0
    missed_entries = 0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        if r == n:
            covered = np.ones((b, n), dtype=bool)
        else:
            u = rng.random((b, sessions, n))
            kth = np.partition(u, r - 1, axis=2)[:, :, r - 1 : r]
            covered = (u <= kth).any(axis=1)
        all_covered += int(covered.all(axis=1).sum())
        missed_entries += int(b * n - covered.sum())
        done += b
    p = all_covered / trials
    q = missed_entries / (trials * n)
    return CoverageEstimate(
        n, r, sessions, trials, p,
        math.sqrt(p * (1 - p) / trials),
        q,
        math.sqrt(q * (1 - q) / (trials * n)),
    )


def exact_coverage_probability(n: int, r: int, sessions: int) -> Fraction:
    """Inclusion-exclusion over the set of never-refreshed entries."""
    total = math.comb(n, r)
    acc = Fraction(0)
    for j in range(n + 1):
        acc += (-1) ** j * math.comb(n, j) * Fraction(math.comb(n - j, r), total) ** sessions
    return acc


def coverage_record(est: CoverageEstimate, k_private: int | None = None) -> dict:
    lo = est.estimate + 3 * est.stderr
    miss_ok = est.per_entry_miss_rate <= est.miss_bound + 3 * math.sqrt(
        est.miss_bound * (1 - est.miss_bound) / (est.trials * est.n)
    )
    return {
        "n": est.n,
        "r": est.r,
        "k_private": k_private,
        "sessions": est.sessions,
        "trials": est.trials,
        "estimate": est.estimate,
        "stderr": est.stderr,
        "bound": est.bound,
        "per_entry_miss_rate": est.per_entry_miss_rate,
        "miss_bound": est.miss_bound,
        "pass": bool(lo >= est.bound and miss_ok),
    }


# -- deterministic schedule audit ---------------------------------------------


@dataclass
class EntryAudit:
    entry: int
    usages: int
    min_gap_refreshes: int | None
    required: int
    ok: bool


@dataclass
class AuditReport:
    n: int
    k_private: int
    period: int
    entries: list[EntryAudit]
    window_totals_min: int
    window_totals_max: int
    total_bound: int
    abstract_bound: int
    entries_ok: bool
    totals_ok: bool
    flagged: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.entries_ok and self.totals_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def audit_deterministic_schedule(
    schedule: Sequence[Sequence[int]], n: int, k_private: int
) -> AuditReport:
    """Check a periodic refresh schedule against the per-entry and per-window refresh bounds.

    ``schedule[s]`` holds the 1-based indices refreshed by session s+1; the schedule
    repeats with its own period.  A refresh in the session that uses an entry
    counts toward the gap before that entry's next use, since the update runs
    after the key is sent.  Violations are reported, never raised.
    """
    period_len = len(schedule)
    sets = [frozenset(s) for s in schedule] if period_len else [frozenset()]
    period_len = len(sets)
    horizon = math.lcm(period_len, n)
    required = n - k_private + 1

    def refreshed(s: int, e: int) -> bool:
        return e in sets[s % period_len]

    audits = []
    for e in range(1, n + 1):
        uses = [s for s in range(horizon) if key_entry_index(n, s + 1) == e]
        gaps = []
        for u in uses:
            # next use is always n sessions later in the key schedule
            gaps.append(sum(refreshed(s, e) for s in range(u, u + n)))
        g = min(gaps) if gaps else None
        audits.append(EntryAudit(e, len(uses), g, required, g is not None and g >= required))

    totals = [sum(len(sets[s % period_len]) for s in range(w, w + n)) for w in range(horizon)]
    total_bound = n * required
    return AuditReport(
        n=n,
        k_private=k_private,
        period=period_len,
        entries=audits,
        window_totals_min=min(totals),
        window_totals_max=max(totals),
        total_bound=total_bound,
        abstract_bound=n * (k_private + 1),
        entries_ok=all(a.ok for a in audits),
        totals_ok=min(totals) >= total_bound,
        flagged=[a.entry for a in audits if not a.ok],
    )


def dense_schedule(n: int, sessions: int | None = None) -> list[list[int]]:
    return [list(range(1, n + 1)) for _ in range(sessions or n)]
