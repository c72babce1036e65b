"""Simulated Tag/Verifier channel with pluggable adversaries.

A run is a sequence of honest sessions.  Depending on the adversary model an
attacker listens to some of them, inserts complete forged sessions between
them (atomic channel), or edits the Tag's frame in flight (non-atomic
channel).  Session indices travel in the clear in every frame header, so the
attacker always knows which key entry is due and whether an unheard session
was accepted.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Sequence

from .ap1 import Ap1Verifier, draw_refresh, encode_ap1_payload, parse_ap1_payload
from .ap2 import Ap2Verifier, session_pad
from .ap2_iima import Ap2tVerifier, seal_frame, unseal_frame
from .core import (
    Bits,
    KeyMessage,
    Protocol,
    RefreshVector,
    SecretVector,
    Verdict,
    VerdictMessage,
    decode_message,
    encode_message,
    key_entry_index,
)
from .padstream import PadStream, SeedState
from .refresh import DENSE, RefreshPolicy, choose_refresh_set


class ConfigurationError(ValueError):
    """The adversary, channel and endpoints cannot be combined as requested."""


class AdversaryKind(str, enum.Enum):
    NONE = "none"
    EAVESDROP = "eavesdrop"
    IMPERSONATE = "impersonate"
    BITFLIP = "bitflip-iima"


STRATEGIES = ("bayes", "random", "replay")


@dataclass(frozen=True)
class AdversaryModel:
    """What the attacker hears, when it strikes and how.

    ``listening`` and ``attacking`` are per-session schedules indexed from
    session 1; ``None`` means every session, and sessions past the end of a
    schedule are treated as False.  ``leak_before=s`` hands the attacker the
    Verifier's full state just before honest session ``s``.  With
    ``commit=False`` each attempt is only probed against the Verifier, which
    turns one session into many independent trials without moving state.
    """

    kind: AdversaryKind = AdversaryKind.NONE
    listening: tuple[bool, ...] | None = None
    attacking: tuple[bool, ...] | None = None
    leak_before: int | None = None
    attempts_per_session: int = 1
    flip_count: int = 1
    flip_positions: tuple[int, ...] | None = None
    strategy: str = "bayes"
    commit: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AdversaryKind(self.kind))
        for name in ("listening", "attacking"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(bool(x) for x in val))
        if self.flip_positions is not None:
            object.__setattr__(self, "flip_positions", tuple(self.flip_positions))
        if self.attempts_per_session < 1:
            raise ConfigurationError("attempts_per_session must be at least 1")
        if self.flip_count < 1:
            raise ConfigurationError("flip_count must be at least 1")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"strategy must be one of {STRATEGIES}")
        if self.leak_before is not None and self.leak_before < 1:
            raise ConfigurationError("leak_before is a 1-based session number")

    def hears(self, s: int) -> bool:
        if self.kind is AdversaryKind.NONE:
            return False
        return _scheduled(self.listening, s)

    def attacks(self, s: int) -> bool:
        if self.kind in (AdversaryKind.NONE, AdversaryKind.EAVESDROP):
            return False
        return _scheduled(self.attacking, s)


def _scheduled(pattern: tuple[bool, ...] | None, s: int) -> bool:
    if pattern is None:
        return True
    return s <= len(pattern) and pattern[s - 1]


NO_ADVERSARY = AdversaryModel()


# -- listening patterns ------------------------------------------------------


def build_listening_pattern(
    rng: PadStream, n: int, k_private: int, sessions: int, placement: str = "worst"
) -> tuple[bool, ...]:
    """Periodic schedule with exactly ``k_private`` unheard sessions per block of ``n``.

    Any ``n`` consecutive sessions cover every residue mod ``n`` once, so each
    window misses ``k_private`` sessions.  ``worst`` puts the misses together
    at the start of each block; ``random`` picks the missed residues at random.
    """
    if k_private < 1:
        raise ValueError("k_private must be at least 1")
    if not k_private <= n <= sessions:
        raise ValueError(f"need k_private <= n <= sessions, got {k_private}, {n}, {sessions}")
    if placement == "worst":
        missed = set(range(k_private))
    elif placement == "random":
        missed = {r - 1 for r in choose_refresh_set(rng, n, k_private)}
    else:
        raise ValueError(f"unknown placement {placement!r}")
    return tuple(s % n not in missed for s in range(sessions))


def window_scan(pattern: Sequence[bool], n: int, k_private: int) -> bool:
    """True iff every window of ``n`` consecutive sessions has at least ``k_private`` misses."""
    return all(
        sum(1 for heard in pattern[a : a + n] if not heard) >= k_private
        for a in range(max(1, len(pattern) - n + 1))
    )


# -- attacker knowledge ------------------------------------------------------


class _EntryBook:
    """Best guesses for secret vector entries, with the subset known exactly."""

    def __init__(self, n: int) -> None:
        self.n = n
        self.values: dict[int, int] = {}
        self.exact: set[int] = set()

    def learn_all(self, arv: SecretVector) -> None:
        self.values = {j: arv.entry(j) for j in range(1, self.n + 1)}
        self.exact = set(self.values)

    def learn(self, j: int, value: int) -> None:
        self.values[j] = value
        self.exact.add(j)

    def forget(self) -> None:
        self.values.clear()
        self.exact.clear()

    def refresh(self, ke: int, lrv: RefreshVector) -> None:
        """Track an accepted session whose refresh vector was seen."""
        if lrv.is_dense:
            vals = {j: v ^ lrv.entries[j - 1] for j, v in self.values.items() if j != ke}
            vals[ke] = lrv.entries[ke - 1]
            self.exact = {j for j in self.exact if j != ke} | {ke}
        else:
            vals = dict(self.values)
            vals[ke] = 0
            self.exact.add(ke)
            for j, v in lrv.pairs:
                if j in vals:
                    vals[j] ^= v
        self.values = vals


class Ap1Knowledge:
    def __init__(self, n: int, l: int, policy: RefreshPolicy = DENSE, strategy: str = "bayes") -> None:
        self.n, self.l, self.policy, self.strategy = n, l, policy, strategy
        self.book = _EntryBook(n)
        self.last_message: KeyMessage | None = None

    def leak(self, verifier_state) -> None:
        self.book.learn_all(verifier_state.arv)

    def observe(self, msg: KeyMessage, verdict: VerdictMessage) -> None:
        try:
            x, lrv = parse_ap1_payload(msg.payload, self.n, self.l, self.policy)
        except ValueError:
            return
        self.last_message = msg
        if not verdict.is_open:
            return
        ke = key_entry_index(self.n, msg.session_index)
        self.book.learn(ke, x)
        self.book.refresh(ke, lrv)

    def miss(self, session_index: int) -> None:
        """An accepted session went unheard."""
        if self.policy.is_dense:
            self.book.forget()
            return
        # the refreshed indices are unknown; stale values stay the best guess
        ke = key_entry_index(self.n, session_index)
        self.book.values[ke] = 0
        self.book.exact.clear()

    def forge(self, rng: PadStream, session_index: int) -> KeyMessage:
        if self.strategy == "replay" and self.last_message is not None:
            return self.last_message
        ke = key_entry_index(self.n, session_index)
        x = self.book.values.get(ke) if self.strategy == "bayes" else None
        if x is None:
            x = rng.next_bits(self.l).value
        if self.policy.is_dense:
            # a uniform dense refresh vector is just n*l uniform bits
            payload = Bits(x, self.l) + rng.next_bits(self.n * self.l)
        else:
            payload = encode_ap1_payload(x, draw_refresh(rng, self.n, self.l, self.policy))
        return KeyMessage(Protocol.AP1, session_index, payload)


class Ap2Knowledge:
    """Attacker view for AP2 and its tamper-resistant variant.

    The initial seed is public, so only the vector entries start unknown.  A
    session can be decrypted only with the chained seed and the used entry both
    known.  Offline search over entry values is not modelled.
    """

    def __init__(self, verifier, strategy: str = "bayes") -> None:
        st = verifier.state
        self.params = st.params
        self.generator_id = st.generator_id
        self.layout = getattr(verifier, "layout", None)
        self.protocol = verifier.protocol
        self.strategy = strategy
        self.book = _EntryBook(self.params.n)
        self.seed: int | None = st.seed.seed
        self.last_message: KeyMessage | None = None

    @property
    def frame_bits(self) -> int:
        return self.params.m if self.layout is None else self.layout.t

    def _seal(self, plaintext: Bits, master: int) -> Bits:
        if self.layout is None:
            return plaintext ^ session_pad(master, self.params.m, self.generator_id)
        return seal_frame(plaintext, master, self.layout, self.generator_id)

    def _unseal(self, payload: Bits, master: int) -> Bits | None:
        if self.layout is None:
            if len(payload) != self.params.m:
                return None
            z = payload ^ session_pad(master, self.params.m, self.generator_id)
            return z if z[self.params.n * self.params.l :] in self.params.keyword_set else None
        z = unseal_frame(payload, master, self.layout, self.generator_id)
        if z is None or z[self.params.n * self.params.l :] not in self.params.keyword_set:
            return None
        return z

    def _staged(self, ke: int) -> int | None:
        if self.seed is None or ke not in self.book.exact:
            return None
        return SeedState(self.seed).advance(self.book.values[ke]).seed

    def leak(self, verifier_state) -> None:
        self.book.learn_all(verifier_state.arv)
        self.seed = verifier_state.seed.seed

    def observe(self, msg: KeyMessage, verdict: VerdictMessage) -> None:
        self.last_message = msg
        p = self.params
        ke = key_entry_index(p.n, msg.session_index)
        staged = self._staged(ke)
        if staged is None:
            if verdict.is_open:
                self.miss(msg.session_index)
            return
        plaintext = self._unseal(msg.payload, staged)
        if plaintext is None or not verdict.is_open:
            return
        lrv = SecretVector.from_bits(plaintext[: p.n * p.l], p.n, p.l)
        self.book.refresh(ke, RefreshVector.dense(lrv.entries, p.l))
        self.seed = staged

    def miss(self, session_index: int) -> None:
        ke = key_entry_index(self.params.n, session_index)
        self.seed = self._staged(ke)
        self.book.forget()

    def forge(self, rng: PadStream, session_index: int) -> KeyMessage:
        p = self.params
        if self.strategy == "replay" and self.last_message is not None:
            return self.last_message
        ke = key_entry_index(p.n, session_index)
        entry = None
        if self.strategy == "bayes" and self.seed is not None:
            if ke in self.book.exact:
                entry = self.book.values[ke]
            elif 2.0 ** -p.l > len(p.keywords) * 2.0 ** -p.keyword_len:
                entry = rng.next_bits(p.l).value
        if entry is None:
            payload = rng.next_bits(self.frame_bits)
        else:
            master = SeedState(self.seed).advance(entry).seed
            plaintext = rng.next_bits(p.n * p.l) + p.keywords[0]
            payload = self._seal(plaintext, master)
        return KeyMessage(self.protocol, session_index, payload)


def make_knowledge(verifier, strategy: str = "bayes"):
    if isinstance(verifier, Ap1Verifier):
        st = verifier.state
        return Ap1Knowledge(st.arv.n, st.arv.width, st.refresh, strategy)
    if isinstance(verifier, (Ap2Verifier, Ap2tVerifier)):
        return Ap2Knowledge(verifier, strategy)
    raise ConfigurationError(f"no attacker model for {type(verifier).__name__}")


def flip_frame(rng: PadStream, payload: Bits, adversary: AdversaryModel) -> Bits:
    """Flip the configured positions, or ``flip_count`` distinct random ones."""
    if adversary.flip_positions is not None:
        return payload.flip(adversary.flip_positions)
    if adversary.flip_count > len(payload):
        raise ConfigurationError("flip_count exceeds the frame length")
    return payload.flip(distinct_positions(rng, len(payload), adversary.flip_count))


def distinct_positions(rng: PadStream, size: int, count: int) -> list[int]:
    """``count`` distinct uniform positions in ``range(size)``, by redrawing repeats."""
    picked: list[int] = []
    while len(picked) < count:
        for p in rng.next_below_each([size] * (count - len(picked))):
            if p not in picked:
                picked.append(p)
    return picked


# -- transcripts and results -------------------------------------------------


@dataclass(frozen=True)
class SessionTranscript:
    """One exchange as seen on the wire (``tag_message`` is what the Verifier received)."""

    session_index: int
    origin: str
    tag_message: bytes | None
    verdict: Verdict | None
    observed_by_adversary: bool
    tampered: bool

    @property
    def completed(self) -> bool:
        return self.tag_message is not None and self.verdict is not None

    def to_json(self) -> str:
        return json.dumps(
            {
                "session_index": self.session_index,
                "origin": self.origin,
                "tag_message": None if self.tag_message is None else self.tag_message.hex(),
                "verdict": None if self.verdict is None else str(self.verdict),
                "observed_by_adversary": self.observed_by_adversary,
                "tampered": self.tampered,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> SessionTranscript:
        d = json.loads(line)
        msg = d["tag_message"]
        verdict = d["verdict"]
        return cls(
            d["session_index"],
            d["origin"],
            None if msg is None else bytes.fromhex(msg),
            None if verdict is None else (Verdict.OPEN if verdict == "Open" else Verdict.DO_NOT_OPEN),
            d["observed_by_adversary"],
            d["tampered"],
        )

    def decoded(self) -> KeyMessage | None:
        return None if self.tag_message is None else decode_message(self.tag_message)


def write_jsonl(transcripts: Iterable[SessionTranscript], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in transcripts:
            fh.write(t.to_json() + "\n")


def read_jsonl(path) -> Iterator[SessionTranscript]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield SessionTranscript.from_json(line)


@dataclass
class RunStats:
    sessions: int = 0
    honest_accepts: int = 0
    adversary_attempts: int = 0
    adversary_successes: int = 0
    tampered: int = 0
    deadlocks: int = 0

    def merge(self, other: RunStats) -> RunStats:
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)
        return self


@dataclass
class RunResult:
    stats: RunStats
    transcripts: list[SessionTranscript] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(t.to_json() + "\n" for t in self.transcripts)


# -- driver ------------------------------------------------------------------


def check_compatible(tag, verifier, adversary: AdversaryModel, atomic: bool) -> None:
    if tag.protocol != verifier.protocol:
        raise ConfigurationError(f"tag speaks {tag.protocol.name}, verifier {verifier.protocol.name}")
    if adversary.kind is AdversaryKind.IMPERSONATE and not atomic:
        raise ConfigurationError("impersonation inserts whole sessions and needs an atomic channel")
    if adversary.kind is AdversaryKind.BITFLIP and atomic:
        raise ConfigurationError("in-flight bit flips need a non-atomic channel")


def _window(verifier) -> int:
    return verifier.state.arv.n


def run_sessions(
    tag,
    verifier,
    adversary: AdversaryModel = NO_ADVERSARY,
    count: int = 1,
    atomic: bool = True,
    record: bool = True,
) -> RunResult:
    """Drive ``count`` honest sessions through the channel under ``adversary``.

    A deadlock is declared when 2n consecutive untampered honest sessions are
    rejected.  If the attacker disturbed the pair at all, up to 2n extra honest
    sessions are run after the attack window to look for one.
    """
    check_compatible(tag, verifier, adversary, atomic)
    if count < 0:
        raise ValueError("count must be non-negative")
    kind = adversary.kind
    rng = PadStream(adversary.seed)
    know = make_knowledge(verifier, adversary.strategy) if kind in (AdversaryKind.EAVESDROP, AdversaryKind.IMPERSONATE) else None
    stats = RunStats()
    out: list[SessionTranscript] = []
    limit = 2 * _window(verifier)
    streak = 0
    disturbed = False

    def log(origin: str, msg: KeyMessage, verdict: VerdictMessage, heard: bool, tampered: bool) -> None:
        if record:
            out.append(SessionTranscript(msg.session_index, origin, encode_message(msg), verdict.verdict, heard, tampered))

    def honest(s: int | None) -> VerdictMessage:
        nonlocal streak, disturbed
        msg = tag.begin()
        delivered, tampered = msg, False
        if s is not None and kind is AdversaryKind.BITFLIP and adversary.attacks(s):
            if adversary.commit:
                delivered, tampered = KeyMessage(msg.protocol, msg.session_index, flip_frame(rng, msg.payload, adversary)), True
                stats.tampered += 1
                stats.adversary_attempts += 1
                disturbed = True
            else:
                for _ in range(adversary.attempts_per_session):
                    probe = KeyMessage(msg.protocol, msg.session_index, flip_frame(rng, msg.payload, adversary))
                    stats.adversary_attempts += 1
                    stats.adversary_successes += verifier.probe(probe).is_open
        verdict = verifier.handle(delivered)
        tag.complete(verdict)
        heard = s is not None and adversary.hears(s)
        if know is not None:
            if heard:
                know.observe(delivered, verdict)
            elif verdict.is_open:
                know.miss(delivered.session_index)
        stats.sessions += 1
        if tampered:
            stats.adversary_successes += verdict.is_open
        else:
            stats.honest_accepts += verdict.is_open
            streak = 0 if verdict.is_open else streak + 1
        log("tag", delivered, verdict, heard, tampered)
        return verdict

    for s in range(1, count + 1):
        if know is not None and adversary.leak_before == s:
            know.leak(verifier.state)
        if kind is AdversaryKind.IMPERSONATE and adversary.attacks(s):
            for _ in range(adversary.attempts_per_session):
                forged = know.forge(rng, verifier.state.i)
                verdict = verifier.handle(forged) if adversary.commit else verifier.probe(forged)
                stats.adversary_attempts += 1
                log("adversary", forged, verdict, True, False)
                if verdict.is_open:
                    stats.adversary_successes += 1
                    if adversary.commit:
                        disturbed = True
                        know.observe(forged, verdict)
                        break
        honest(s)
        if streak >= limit:
            stats.deadlocks = 1
            break

    if disturbed and not stats.deadlocks:
        for _ in range(limit):
            if honest(None).is_open:
                break
        else:
            stats.deadlocks = 1
    return RunResult(stats, out)
