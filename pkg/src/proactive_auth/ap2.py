"""Computationally secure proactive authentication: the AP1 refresh wrapped in a seeded pad.

Per session the key entry is folded into a chained seed; a pad of
``m = n*l + keyword_len`` bits from that seed hides ``LRV || keyword``.  The
Verifier opens iff the decrypted suffix is a known keyword.  The seed only
advances on Open, on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .ap1 import updating_procedure
from .core import (
    DO_NOT_OPEN,
    OPEN,
    Bits,
    KeyMessage,
    Protocol,
    ProtocolError,
    ProtocolParams,
    RefreshVector,
    SecretVector,
    VerdictMessage,
    Verifier,
    key_entry_index,
)
from .padstream import DEFAULT_GENERATOR, PadStream, SeedState


def session_pad(master: int, length: int, generator_id: str = DEFAULT_GENERATOR) -> Bits:
    return PadStream(master, generator_id).next_bits(length)


@dataclass(frozen=True)
class Pending:
    lrv: RefreshVector
    keyword: Bits
    staged_seed: SeedState
    plaintext: Bits


@dataclass
class Ap2TagState:
    params: ProtocolParams
    arv: SecretVector
    rng: PadStream
    seed: SeedState = field(default_factory=SeedState)
    i: int = 1
    generator_id: str = DEFAULT_GENERATOR
    pending: Pending | None = None
    role = "tag"
    protocol = Protocol.AP2

    def __post_init__(self) -> None:
        _check_vector(self.params, self.arv)

    def begin(self, keyword: Bits | None = None) -> KeyMessage:
        return ap2_tag_build_message(self, keyword)

    def complete(self, verdict: VerdictMessage) -> None:
        ap2_tag_complete(self, verdict)

    @property
    def synced_view(self) -> tuple:
        return (self.arv, self.i, self.seed)


@dataclass(frozen=True)
class Ap2VerifierState:
    params: ProtocolParams
    arv: SecretVector
    seed: SeedState = SeedState()
    i: int = 1
    generator_id: str = DEFAULT_GENERATOR
    role = "verifier"

    def __post_init__(self) -> None:
        _check_vector(self.params, self.arv)

    @property
    def synced_view(self) -> tuple:
        return (self.arv, self.i, self.seed)


def _check_vector(params: ProtocolParams, arv: SecretVector) -> None:
    if arv.n != params.n or arv.width != params.l:
        raise ValueError("secret vector does not match (n, l)")


def stage_session(st: Ap2TagState, keyword: Bits | None) -> tuple[int, SeedState, RefreshVector, Bits, Bits]:
    """Shared first half of a tag session: key entry, staged seed, fresh LRV, plaintext."""
    if st.pending is not None:
        raise ProtocolError("a session is already pending")
    p = st.params
    if keyword is None:
        keyword = p.keywords[0]
    elif keyword not in p.keyword_set:
        raise ValueError(f"unknown keyword {keyword}")
    ke = key_entry_index(p.n, st.i)
    staged = st.seed.advance(st.arv.entry(ke))
    lrv = RefreshVector.dense([st.rng.next_bits(p.l).value for _ in range(p.n)], p.l)
    plaintext = SecretVector(lrv.entries, p.l).to_bits() + keyword
    return ke, staged, lrv, keyword, plaintext


def ap2_tag_build_message(st: Ap2TagState, keyword: Bits | None = None) -> KeyMessage:
    _, staged, lrv, keyword, plaintext = stage_session(st, keyword)
    y = plaintext ^ session_pad(staged.seed, st.params.m, st.generator_id)
    st.pending = Pending(lrv, keyword, staged, plaintext)
    return KeyMessage(Protocol.AP2, st.i, y)


def ap2_tag_complete(st: Ap2TagState, verdict: VerdictMessage) -> Ap2TagState:
    """Commit the staged seed and refresh on Open; discard both otherwise.  Mutates ``st``."""
    if st.pending is None:
        raise ProtocolError("no session is pending")
    pend, st.pending = st.pending, None
    if verdict.is_open:
        st.arv = updating_procedure(st.arv, key_entry_index(st.params.n, st.i), pend.lrv)
        st.seed = pend.staged_seed
        st.i += 1
    return st


def accept_plaintext(st, ke: int, staged: SeedState, plaintext: Bits):
    """Open-branch state update shared by both computational protocols."""
    p = st.params
    lrv = RefreshVector.dense(SecretVector.from_bits(plaintext[: p.n * p.l], p.n, p.l).entries, p.l)
    return replace(st, arv=updating_procedure(st.arv, ke, lrv), seed=staged, i=st.i + 1)


def ap2_verifier_handle(st: Ap2VerifierState, msg: KeyMessage) -> tuple[VerdictMessage, Ap2VerifierState]:
    p = st.params
    if msg.protocol is not Protocol.AP2 or len(msg.payload) != p.m:
        return DO_NOT_OPEN, st
    ke = key_entry_index(p.n, st.i)
    staged = st.seed.advance(st.arv.entry(ke))
    z = msg.payload ^ session_pad(staged.seed, p.m, st.generator_id)
    if z[p.n * p.l :] not in p.keyword_set:
        return DO_NOT_OPEN, st
    return OPEN, accept_plaintext(st, ke, staged, z)


class Ap2Verifier(Verifier):
    protocol = Protocol.AP2

    def transition(self, state: Ap2VerifierState, msg: KeyMessage):
        return ap2_verifier_handle(state, msg)


def make_pair(
    params: ProtocolParams,
    arv: SecretVector,
    tag_rng: PadStream,
    generator_id: str = DEFAULT_GENERATOR,
) -> tuple[Ap2TagState, Ap2Verifier]:
    tag = Ap2TagState(params, arv, tag_rng, generator_id=generator_id)
    return tag, Ap2Verifier(Ap2VerifierState(params, arv, generator_id=generator_id))
