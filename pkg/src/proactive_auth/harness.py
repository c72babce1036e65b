"""Monte Carlo experiment runner, bound checks, CSV/JSON reports and a multi-pair registry."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

from .ap1 import Ap1TagState, Ap1Verifier, Ap1VerifierState
from .ap2 import Ap2TagState, Ap2Verifier, Ap2VerifierState
from .ap2_iima import Ap2tTag, Ap2tVerifier, FrameLayout, compute_security_bound
from .channel import (
    AdversaryKind,
    AdversaryModel,
    ConfigurationError,
    RunStats,
    build_listening_pattern,
    run_sessions,
)
from .core import Bits, KeyMessage, ProtocolParams, SecretVector, VerdictMessage, default_keyword
from .padstream import DEFAULT_GENERATOR, MASK64, PadStream, available_generators, derive_subseeds
from .refresh import DENSE, RefreshMode, RefreshPolicy

PROTOCOLS = ("ap1", "ap2", "ap2t")

CSV_COLUMNS = [
    "protocol", "n", "l", "keyword_len", "adversary", "trials",
    "honest_rate", "adv_rate", "adv_stderr", "bound", "deadlocks", "pass",
]
EXTRA_COLUMNS = [
    "name", "attempts", "successes", "sessions", "bound_source",
    "generator_id", "master_seed", "m", "q", "v", "t", "dims",
]


@dataclass(frozen=True)
class AdversarySpec:
    """Config-level adversary: like ``AdversaryModel`` but with schedule rules left symbolic.

    ``listening`` is ``None`` (hear everything), an explicit list of booleans,
    or ``{"k_private": k, "placement": "worst" | "random"}`` expanded per trial.
    ``flip_count`` may be ``"d_min"``.  ``atomic=None`` picks the channel the
    adversary kind needs.
    """

    kind: str = "none"
    listening: Any = None
    attacking: tuple[bool, ...] | None = None
    leak_before: int | None = None
    attempts_per_session: int = 1
    flip_count: int | str = 1
    flip_positions: tuple[int, ...] | None = None
    strategy: str = "bayes"
    commit: bool = True
    atomic: bool | None = None

    @property
    def channel_atomic(self) -> bool:
        if self.atomic is not None:
            return self.atomic
        return AdversaryKind(self.kind) is not AdversaryKind.BITFLIP


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    params: ProtocolParams
    refresh: RefreshPolicy = DENSE
    layout: FrameLayout | None = None
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    trials: int = 1
    sessions_per_trial: int = 1
    master_seed: int = 0
    generator_id: str = DEFAULT_GENERATOR
    name: str = ""

    def validate(self) -> None:
        """Raise ConfigurationError listing every inconsistent field."""
        problems = []
        if self.protocol not in PROTOCOLS:
            problems.append(f"protocol: must be one of {PROTOCOLS}")
        if self.trials < 1:
            problems.append("trials: must be at least 1")
        if self.sessions_per_trial < 1:
            problems.append("sessions_per_trial: must be at least 1")
        if not 0 <= self.master_seed <= MASK64:
            problems.append("master_seed: must be an unsigned 64-bit integer")
        if self.generator_id not in available_generators():
            problems.append(f"generator_id: unknown generator {self.generator_id!r}")
        if self.protocol != "ap1" and not self.refresh.is_dense:
            problems.append("refresh: sparse refresh is only defined for ap1")
        if self.protocol == "ap2t":
            if self.layout is None:
                problems.append("layout: required for ap2t")
            elif self.layout.m != self.params.m:
                problems.append("layout: m differs from n*l + keyword_len")
        elif self.layout is not None:
            problems.append("layout: only meaningful for ap2t")
        try:
            self.refresh.check(self.params.n)
        except ValueError as exc:
            problems.append(f"refresh: {exc}")
        adv = self.adversary
        try:
            kind = AdversaryKind(adv.kind)
        except ValueError:
            problems.append(f"adversary.kind: unknown kind {adv.kind!r}")
        else:
            if kind is AdversaryKind.IMPERSONATE and not adv.channel_atomic:
                problems.append("adversary.atomic: impersonation needs an atomic channel")
            if kind is AdversaryKind.BITFLIP and adv.channel_atomic:
                problems.append("adversary.atomic: bit flips need a non-atomic channel")
        if adv.flip_count == "d_min" and self.protocol != "ap2t":
            problems.append("adversary.flip_count: 'd_min' needs the ap2t frame layout")
        if problems:
            raise ConfigurationError("; ".join(problems))

    def adversary_model(self, seed: int, pattern_seed: int) -> AdversaryModel:
        adv = self.adversary
        listening = adv.listening
        if isinstance(listening, dict):
            listening = build_listening_pattern(
                PadStream(pattern_seed, self.generator_id),
                self.params.n,
                int(listening["k_private"]),
                self.sessions_per_trial,
                listening.get("placement", "worst"),
            )
        flips = adv.flip_count
        if flips == "d_min":
            flips = compute_security_bound(self.layout).d_min
        return AdversaryModel(
            kind=adv.kind,
            listening=listening,
            attacking=adv.attacking,
            leak_before=adv.leak_before,
            attempts_per_session=adv.attempts_per_session,
            flip_count=int(flips),
            flip_positions=adv.flip_positions,
            strategy=adv.strategy,
            commit=adv.commit,
            seed=seed,
        )


def make_endpoints(cfg: ExperimentConfig, arv: SecretVector, tag_rng: PadStream):
    """Fresh synchronised Tag and Verifier for one trial."""
    gid = cfg.generator_id
    if cfg.protocol == "ap1":
        return Ap1TagState(arv, tag_rng, refresh=cfg.refresh), Ap1Verifier(Ap1VerifierState(arv, refresh=cfg.refresh))
    tag = Ap2TagState(cfg.params, arv, tag_rng, generator_id=gid)
    vst = Ap2VerifierState(cfg.params, arv, generator_id=gid)
    if cfg.protocol == "ap2":
        return tag, Ap2Verifier(vst)
    return Ap2tTag(tag, cfg.layout), Ap2tVerifier(vst, cfg.layout)


@dataclass(frozen=True)
class Bound:
    value: float
    source: str


def theoretical_bound(cfg: ExperimentConfig) -> Bound:
    kind = AdversaryKind(cfg.adversary.kind)
    p = cfg.params
    if kind in (AdversaryKind.NONE, AdversaryKind.EAVESDROP):
        return Bound(0.0, "no forgery attempted")
    if kind is AdversaryKind.IMPERSONATE:
        if cfg.protocol == "ap1":
            return Bound(2.0**-p.l, "key entry guess: 2^-l")
        # a forger either guesses the entry or hits a keyword with a random frame
        b = min(1.0, len(p.keywords) * 2.0**-p.keyword_len + 2.0**-p.l)
        return Bound(b, "keyword guess: |K|*2^-keyword_len + 2^-l")
    if cfg.protocol == "ap2t":
        sb = compute_security_bound(cfg.layout)
        return Bound(sb.p_a_bound, f"parity+watermark: (1-alpha)^d_min, d_min={sb.d_min}")
    return Bound(1.0, "none: frame carries no integrity check")


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    stats: RunStats
    honest_rate: float
    adv_rate: float
    adv_stderr: float
    bound: float
    bound_source: str

    @property
    def deadlocks(self) -> int:
        return self.stats.deadlocks

    @property
    def passed(self) -> bool:
        n = self.stats.adversary_attempts
        slack = 3 * math.sqrt(self.bound * (1 - self.bound) / n) if n else 0.0
        return self.adv_rate <= self.bound + slack and self.deadlocks == 0

    def row(self) -> dict[str, Any]:
        cfg, p, lay = self.config, self.config.params, self.config.layout
        return {
            "protocol": cfg.protocol,
            "n": p.n,
            "l": p.l,
            "keyword_len": p.keyword_len,
            "adversary": cfg.adversary.kind,
            "trials": cfg.trials,
            "honest_rate": _fmt(self.honest_rate),
            "adv_rate": _fmt(self.adv_rate),
            "adv_stderr": _fmt(self.adv_stderr),
            "bound": _fmt(self.bound),
            "deadlocks": self.deadlocks,
            "pass": str(self.passed).lower(),
            "name": cfg.name,
            "attempts": self.stats.adversary_attempts,
            "successes": self.stats.adversary_successes,
            "sessions": self.stats.sessions,
            "bound_source": self.bound_source,
            "generator_id": cfg.generator_id,
            "master_seed": cfg.master_seed,
            "m": p.m,
            "q": lay.q if lay else "",
            "v": lay.v if lay else "",
            "t": lay.t if lay else "",
            "dims": lay.dims if lay else "",
        }


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def trial_seeds(master_seed: int, trials: int, generator_id: str = DEFAULT_GENERATOR):
    """Yield ``(arv_seed, tag_seed, adversary_seed)`` per trial by chaining sub-seed derivation."""
    cur = master_seed
    for _ in range(trials):
        a, b, c, cur = derive_subseeds(cur, generator_id)
        yield a, b, c


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    cfg.validate()
    p, gid = cfg.params, cfg.generator_id
    total = RunStats()
    atomic = cfg.adversary.channel_atomic
    for a, b, c in trial_seeds(cfg.master_seed, cfg.trials, gid):
        arv = SecretVector.random(PadStream(a, gid), p.n, p.l)
        tag, verifier = make_endpoints(cfg, arv, PadStream(b, gid))
        adv_seed, pattern_seed, _, _ = derive_subseeds(c, gid)
        adv = cfg.adversary_model(adv_seed, pattern_seed)
        total.merge(run_sessions(tag, verifier, adv, cfg.sessions_per_trial, atomic, record=False).stats)
    honest_total = total.sessions - total.tampered
    honest_rate = total.honest_accepts / honest_total if honest_total else 1.0
    n = total.adversary_attempts
    rate = total.adversary_successes / n if n else 0.0
    stderr = math.sqrt(rate * (1 - rate) / n) if n else 0.0
    bound = theoretical_bound(cfg)
    return ExperimentResult(cfg, total, honest_rate, rate, stderr, bound.value, bound.source)


# -- configuration files -----------------------------------------------------


def config_from_dict(d: dict[str, Any]) -> ExperimentConfig:
    d = dict(d)
    try:
        n, l, kl = int(d["n"]), int(d["l"]), int(d["keyword_len"])
    except KeyError as exc:
        raise ConfigurationError(f"{exc.args[0]}: required field missing") from None
    kws = d.get("keywords")
    keywords = tuple(Bits.from_str(k) for k in kws) if kws else (default_keyword(kl),)
    try:
        params = ProtocolParams(n, l, kl, keywords)
    except ValueError as exc:
        raise ConfigurationError(f"params: {exc}") from None
    ref = d.get("refresh") or {}
    if ref.get("mode", "dense") == RefreshMode.SPARSE_RANDOM.value:
        refresh = RefreshPolicy(RefreshMode.SPARSE_RANDOM, ref.get("r"), int(ref.get("k_private", 1)))
    else:
        refresh = RefreshPolicy(k_private=int(ref.get("k_private", 1)))
    layout = None
    if d.get("protocol") == "ap2t":
        lay = d.get("layout") or {}
        layout = FrameLayout.for_params(params, lay.get("dims"), lay.get("v"))
    adv = dict(d.get("adversary") or {})
    for key in ("attacking", "flip_positions"):
        if adv.get(key) is not None:
            adv[key] = tuple(adv[key])
    if isinstance(adv.get("listening"), list):
        adv["listening"] = tuple(adv["listening"])
    try:
        spec = AdversarySpec(**adv)
    except TypeError as exc:
        raise ConfigurationError(f"adversary: {exc}") from None
    return ExperimentConfig(
        protocol=d.get("protocol", "ap1"),
        params=params,
        refresh=refresh,
        layout=layout,
        adversary=spec,
        trials=int(d.get("trials", 1)),
        sessions_per_trial=int(d.get("sessions_per_trial", 1)),
        master_seed=int(d.get("master_seed", 0)),
        generator_id=d.get("generator_id", DEFAULT_GENERATOR),
        name=d.get("name", ""),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    p = cfg.params
    out: dict[str, Any] = {
        "name": cfg.name,
        "protocol": cfg.protocol,
        "n": p.n,
        "l": p.l,
        "keyword_len": p.keyword_len,
        "keywords": [str(k) for k in p.keywords],
        "refresh": {"mode": cfg.refresh.mode.value, "r": cfg.refresh.per_session_count, "k_private": cfg.refresh.k_private},
        "adversary": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg.adversary).items()},
        "trials": cfg.trials,
        "sessions_per_trial": cfg.sessions_per_trial,
        "master_seed": cfg.master_seed,
        "generator_id": cfg.generator_id,
    }
    if cfg.layout is not None:
        out["layout"] = {"dims": cfg.layout.dims, "v": cfg.layout.v}
    return out


def load_configs(text: str, overrides: dict[str, Any] | None = None) -> list[ExperimentConfig]:
    """Parse one experiment object or ``{"experiments": [...]}``; overrides apply to every entry."""
    doc = json.loads(text)
    entries = doc["experiments"] if isinstance(doc, dict) and "experiments" in doc else [doc]
    extra = {k: v for k, v in (overrides or {}).items() if v is not None}
    return [config_from_dict({**e, **extra}) for e in entries]


def results_csv(results: list[ExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS + EXTRA_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow(r.row())
    return buf.getvalue()


def results_json(results: list[ExperimentResult]) -> str:
    rows = []
    for r in results:
        row = r.row()
        row["pass"] = r.passed
        row["config"] = config_to_dict(r.config)
        rows.append(row)
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"


# -- registry of independent pairs ------------------------------------------


@dataclass
class Pair:
    tag: Any
    verifier: Any


class PairRegistry:
    """Independent Tag/Verifier pairs, one shared vector each, keyed by tag id.

    Pair secrets come from a chain of sub-seeds, so registration order fixes
    every pair's state.
    """

    def __init__(self, template: ExperimentConfig) -> None:
        template.validate()
        self.template = template
        self._pairs: dict[str, Pair] = {}
        self._next_seed = template.master_seed

    def register_pair(self, tag_id: str) -> Pair:
        if tag_id in self._pairs:
            raise KeyError(f"tag id {tag_id!r} already registered")
        a, b, _, self._next_seed = derive_subseeds(self._next_seed, self.template.generator_id)
        p = self.template.params
        arv = SecretVector.random(PadStream(a, self.template.generator_id), p.n, p.l)
        tag, verifier = make_endpoints(self.template, arv, PadStream(b, self.template.generator_id))
        pair = self._pairs[tag_id] = Pair(tag, verifier)
        return pair

    def lookup(self, tag_id: str) -> Pair:
        try:
            return self._pairs[tag_id]
        except KeyError:
            raise KeyError(f"unknown tag id {tag_id!r}") from None

    def __len__(self) -> int:
        return len(self._pairs)

    def __contains__(self, tag_id: str) -> bool:
        return tag_id in self._pairs

    def deliver(self, tag_id: str, msg: KeyMessage) -> VerdictMessage:
        """Hand ``msg`` to the Verifier side of ``tag_id`` (committing on Open)."""
        return self.lookup(tag_id).verifier.handle(msg)

    def session(self, tag_id: str) -> VerdictMessage:
        pair = self.lookup(tag_id)
        verdict = pair.verifier.handle(pair.tag.begin())
        pair.tag.complete(verdict)
        return verdict
