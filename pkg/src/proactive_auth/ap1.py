"""Information-theoretic proactive authentication (one shared vector, xor refresh per session).

The Tag sends ``(ARV[keyentry], LRV)``; the Verifier opens iff the key matches
its own copy of the entry.  Both sides then zero the used entry and xor the
fresh vector into every entry.  Tag state is a mutable device record; verifier
state is immutable and every transition returns a new value, so a rejected
message provably leaves it untouched.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

from .core import (
    DO_NOT_OPEN,
    OPEN,
    Bits,
    KeyMessage,
    Protocol,
    ProtocolError,
    RefreshVector,
    SecretVector,
    VerdictMessage,
    Verifier,
    concat,
    key_entry_index,
)
from .padstream import PadStream
from .refresh import DENSE, RefreshPolicy, apply_sparse_refresh, draw_sparse_refresh

__all__ = [
    "Ap1TagState",
    "Ap1VerifierState",
    "Ap1Verifier",
    "key_entry_index",
    "tag_begin_session",
    "tag_complete_session",
    "updating_procedure",
    "verifier_handle_key_message",
    "encode_ap1_payload",
    "parse_ap1_payload",
    "ap1_payload_bits",
]

_STATE_VERSION = 1


def updating_procedure(arv: SecretVector, keyentry: int, lrv: RefreshVector) -> SecretVector:
    if not lrv.is_dense:
        raise ValueError("the dense updating procedure needs a dense refresh vector")
    if lrv.n != arv.n:
        raise ValueError("refresh vector length differs from n")
    e = [a ^ r for a, r in zip(arv.entries, lrv.entries)]
    e[keyentry - 1] = lrv.entries[keyentry - 1]
    return SecretVector(tuple(e), arv.width)


def apply_refresh(arv: SecretVector, keyentry: int, lrv: RefreshVector) -> SecretVector:
    if lrv.is_dense:
        return updating_procedure(arv, keyentry, lrv)
    return apply_sparse_refresh(arv, keyentry, lrv)


def _index_bits(n: int) -> int:
    return max(1, (n - 1).bit_length())


def ap1_payload_bits(n: int, l: int, policy: RefreshPolicy = DENSE) -> int:
    if policy.is_dense:
        return l + n * l
    return l + policy.count(n) * (_index_bits(n) + l)


def encode_ap1_payload(x: int, lrv: RefreshVector) -> Bits:
    l = lrv.width
    head = Bits(x, l)
    if lrv.is_dense:
        return concat([head, *(Bits(v, l) for v in lrv.entries)])
    ib = _index_bits(lrv.n)
    return concat([head, *(Bits(i - 1, ib) + Bits(v, l) for i, v in lrv.pairs)])


def parse_ap1_payload(payload: Bits, n: int, l: int, policy: RefreshPolicy = DENSE) -> tuple[int, RefreshVector]:
    """Split a payload into ``(X, LRV)``; raises ValueError when malformed."""
    if len(payload) != ap1_payload_bits(n, l, policy):
        raise ValueError("payload length does not match the frame")
    x = payload[0:l].value
    body = payload[l:]
    if policy.is_dense:
        return x, RefreshVector.dense(SecretVector.from_bits(body, n, l).entries, l)
    ib = _index_bits(n)
    step = ib + l
    pairs = []
    for k in range(policy.count(n)):
        chunk = body[k * step : (k + 1) * step]
        pairs.append((chunk[0:ib].value + 1, chunk[ib:].value))
    return x, RefreshVector.sparse(pairs, n, l)


def draw_refresh(rng: PadStream, n: int, l: int, policy: RefreshPolicy) -> RefreshVector:
    if policy.is_dense:
        return RefreshVector.dense([rng.next_bits(l).value for _ in range(n)], l)
    return draw_sparse_refresh(rng, n, l, policy.count(n))


@dataclass
class Ap1TagState:
    arv: SecretVector
    rng: PadStream
    i: int = 1
    refresh: RefreshPolicy = DENSE
    pending_lrv: RefreshVector | None = None
    protocol = Protocol.AP1

    def __post_init__(self) -> None:
        self.refresh.check(self.arv.n)

    # endpoint interface used by the channel
    def begin(self) -> KeyMessage:
        return tag_begin_session(self)

    def complete(self, verdict: VerdictMessage) -> None:
        tag_complete_session(self, verdict)

    @property
    def synced_view(self) -> tuple:
        return (self.arv, self.i)

    def to_bytes(self) -> bytes:
        gid, seed, state, buf, buf_len, emitted = self.rng.snapshot()
        gid_b = gid.encode()
        head = struct.pack(">BB", _STATE_VERSION, len(gid_b)) + gid_b
        rng_part = struct.pack(">QQIQ", seed, state, buf_len, emitted) + buf.to_bytes(8, "big")
        return head + rng_part + _pack_ap1_core(self.arv, self.i, self.refresh)

    @classmethod
    def from_bytes(cls, data: bytes) -> Ap1TagState:
        version, glen = struct.unpack_from(">BB", data)
        if version != _STATE_VERSION:
            raise ValueError(f"unsupported state version {version}")
        gid = data[2 : 2 + glen].decode()
        off = 2 + glen
        seed, state, buf_len, emitted = struct.unpack_from(">QQIQ", data, off)
        off += struct.calcsize(">QQIQ")
        buf = int.from_bytes(data[off : off + 8], "big")
        arv, i, refresh = _unpack_ap1_core(data[off + 8 :])
        rng = PadStream.restore((gid, seed, state, buf, buf_len, emitted))
        return cls(arv, rng, i, refresh)


@dataclass(frozen=True)
class Ap1VerifierState:
    arv: SecretVector
    i: int = 1
    refresh: RefreshPolicy = DENSE

    def __post_init__(self) -> None:
        self.refresh.check(self.arv.n)

    @property
    def synced_view(self) -> tuple:
        return (self.arv, self.i)

    def to_bytes(self) -> bytes:
        return struct.pack(">B", _STATE_VERSION) + _pack_ap1_core(self.arv, self.i, self.refresh)

    @classmethod
    def from_bytes(cls, data: bytes) -> Ap1VerifierState:
        if data[0] != _STATE_VERSION:
            raise ValueError(f"unsupported state version {data[0]}")
        arv, i, refresh = _unpack_ap1_core(data[1:])
        return cls(arv, i, refresh)


def _pack_ap1_core(arv: SecretVector, i: int, refresh: RefreshPolicy) -> bytes:
    sparse = 0 if refresh.is_dense else 1
    r = refresh.count(arv.n)
    head = struct.pack(">IIQBII", arv.n, arv.width, i, sparse, r, refresh.k_private)
    return head + arv.to_bits().to_bytes()


def _unpack_ap1_core(data: bytes) -> tuple[SecretVector, int, RefreshPolicy]:
    fmt = ">IIQBII"
    n, width, i, sparse, r, k = struct.unpack_from(fmt, data)
    body = data[struct.calcsize(fmt) :]
    arv = SecretVector.from_bits(Bits.from_bytes(body, n * width), n, width)
    refresh = RefreshPolicy.sparse(n, r, k) if sparse else RefreshPolicy(k_private=k)
    return arv, i, refresh


def tag_begin_session(st: Ap1TagState) -> KeyMessage:
    """Draw a fresh refresh vector and build the key message; the vector is applied only on Open."""
    if st.pending_lrv is not None:
        raise ProtocolError("a session is already pending")
    n, l = st.arv.n, st.arv.width
    ke = key_entry_index(n, st.i)
    lrv = draw_refresh(st.rng, n, l, st.refresh)
    st.pending_lrv = lrv
    return KeyMessage(Protocol.AP1, st.i, encode_ap1_payload(st.arv.entry(ke), lrv))


def tag_complete_session(st: Ap1TagState, verdict: VerdictMessage) -> Ap1TagState:
    """Apply the pending refresh on Open, drop it otherwise.  Mutates and returns ``st``."""
    if st.pending_lrv is None:
        raise ProtocolError("no session is pending")
    lrv, st.pending_lrv = st.pending_lrv, None
    if verdict.is_open:
        st.arv = apply_refresh(st.arv, key_entry_index(st.arv.n, st.i), lrv)
        st.i += 1
    return st


def verifier_handle_key_message(
    st: Ap1VerifierState, msg: KeyMessage
) -> tuple[VerdictMessage, Ap1VerifierState]:
    if msg.protocol is not Protocol.AP1:
        return DO_NOT_OPEN, st
    n, l = st.arv.n, st.arv.width
    payload = msg.payload
    if len(payload) != ap1_payload_bits(n, l, st.refresh):
        return DO_NOT_OPEN, st
    ke = key_entry_index(n, st.i)
    # compare the key before decoding the refresh part
    if payload.value >> (len(payload) - l) != st.arv.entry(ke):
        return DO_NOT_OPEN, st
    try:
        _, lrv = parse_ap1_payload(payload, n, l, st.refresh)
    except ValueError:
        return DO_NOT_OPEN, st
    return OPEN, replace(st, arv=apply_refresh(st.arv, ke, lrv), i=st.i + 1)


class Ap1Verifier(Verifier):
    protocol = Protocol.AP1

    def transition(self, state: Ap1VerifierState, msg: KeyMessage):
        return verifier_handle_key_message(state, msg)
