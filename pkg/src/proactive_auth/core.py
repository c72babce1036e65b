"""Shared value types, bit-string helpers and the wire framing for protocol messages.

Bit-strings are held as ``Bits(value, length)`` with the first bit of the string
in the most significant position of ``value``.  Everything here is immutable.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from operator import itemgetter
from typing import Iterable, Sequence

FRAME_VERSION = 0x01
_HEADER = struct.Struct(">BBII")


class FramingError(ValueError):
    """Raised when a byte string is not a valid framed message."""


class ProtocolError(RuntimeError):
    """Raised when a state machine is driven out of order."""


@dataclass(frozen=True, slots=True)
class Bits:
    value: int
    length: int

    def __post_init__(self) -> None:
        if self.length < 0 or self.value < 0 or self.value >> self.length:
            raise ValueError(f"value does not fit in {self.length} bits")

    @classmethod
    def from_str(cls, s: str) -> Bits:
        s = s.replace("_", "").replace(" ", "")
        if s.strip("01"):
            raise ValueError(f"not a bit-string: {s!r}")
        return cls(int(s, 2) if s else 0, len(s))

    @classmethod
    def zeros(cls, length: int) -> Bits:
        return cls(0, length)

    @classmethod
    def from_bytes(cls, data: bytes, length: int) -> Bits:
        if length > 8 * len(data):
            raise ValueError("not enough bytes")
        spare = 8 * len(data) - length
        return cls(int.from_bytes(data, "big") >> spare, length)

    def to_bytes(self) -> bytes:
        nbytes = (self.length + 7) // 8
        return (self.value << (8 * nbytes - self.length)).to_bytes(nbytes, "big")

    def __len__(self) -> int:
        return self.length

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""

    def __xor__(self, other: Bits) -> Bits:
        if self.length != other.length:
            raise ValueError(f"length mismatch: {self.length} != {other.length}")
        return Bits(self.value ^ other.value, self.length)

    def __add__(self, other: Bits) -> Bits:
        return Bits((self.value << other.length) | other.value, self.length + other.length)

    def __getitem__(self, key: int | slice) -> int | Bits:
        if isinstance(key, slice):
            start, stop, step = key.indices(self.length)
            if step != 1:
                raise ValueError("only contiguous slices are supported")
            width = max(0, stop - start)
            return Bits((self.value >> (self.length - start - width)) & ((1 << width) - 1), width)
        if key < 0:
            key += self.length
        if not 0 <= key < self.length:
            raise IndexError(key)
        return (self.value >> (self.length - 1 - key)) & 1

    def flip(self, positions: Iterable[int]) -> Bits:
        mask = 0
        for p in positions:
            if not 0 <= p < self.length:
                raise IndexError(p)
            mask ^= 1 << (self.length - 1 - p)
        return Bits(self.value ^ mask, self.length)

    def gather(self, indices: Sequence[int]) -> Bits:
        """Return the bit-string whose k-th bit is ``self[indices[k]]``."""
        if not indices:
            return Bits(0, 0)
        s = str(self)
        return Bits(int("".join(itemgetter(*indices)(s)), 2), len(indices))

    def count(self) -> int:
        return self.value.bit_count()


def xor_bits(a: Bits, b: Bits) -> Bits:
    return a ^ b


def concat(parts: Iterable[Bits]) -> Bits:
    value = length = 0
    for p in parts:
        value = (value << p.length) | p.value
        length += p.length
    return Bits(value, length)


def key_entry_index(n: int, i: int) -> int:
    """1-based index of the vector entry used as the key in session ``i``."""
    if n < 1 or i < 1:
        raise ValueError("need n >= 1 and i >= 1")
    return n - ((i - 1) % n)


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    l: int
    keyword_len: int
    keywords: tuple[Bits, ...]
    keyword_set: frozenset[Bits] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n < 2 or self.l < 1 or self.keyword_len < 1:
            raise ValueError("need n >= 2, l >= 1, keyword_len >= 1")
        kws = tuple(self.keywords)
        if not kws:
            raise ValueError("keyword set is empty")
        if any(len(k) != self.keyword_len for k in kws):
            raise ValueError(f"every keyword must have {self.keyword_len} bits")
        if len(set(kws)) != len(kws):
            raise ValueError("duplicate keywords")
        object.__setattr__(self, "keywords", kws)
        object.__setattr__(self, "keyword_set", frozenset(kws))

    @property
    def m(self) -> int:
        """Bits of (refresh vector || keyword)."""
        return self.n * self.l + self.keyword_len

    @classmethod
    def with_default_keyword(cls, n: int, l: int, keyword_len: int) -> ProtocolParams:
        return cls(n, l, keyword_len, (default_keyword(keyword_len),))


def default_keyword(length: int) -> Bits:
    # alternating 1010... ; the keyword is public, its value is arbitrary
    return Bits.from_str(("10" * length)[:length])


@dataclass(frozen=True)
class SecretVector:
    """The shared n-entry vector; ``entry``/``with_entry`` take 1-based indices."""

    entries: tuple[int, ...]
    width: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.width < 1:
            raise ValueError("width must be positive")
        top = 1 << self.width
        if any(not 0 <= e < top for e in self.entries):
            raise ValueError(f"entry does not fit in {self.width} bits")

    @property
    def n(self) -> int:
        return len(self.entries)

    def entry(self, index: int) -> int:
        if not 1 <= index <= len(self.entries):
            raise IndexError(index)
        return self.entries[index - 1]

    def with_entry(self, index: int, value: int) -> SecretVector:
        if not 1 <= index <= len(self.entries):
            raise IndexError(index)
        e = list(self.entries)
        e[index - 1] = value
        return SecretVector(tuple(e), self.width)

    def to_bits(self) -> Bits:
        return concat(Bits(e, self.width) for e in self.entries)

    @classmethod
    def from_bits(cls, bits: Bits, n: int, width: int) -> SecretVector:
        if len(bits) != n * width:
            raise ValueError("bit length does not match n * width")
        mask = (1 << width) - 1
        v = bits.value
        return cls(tuple((v >> (width * (n - 1 - j))) & mask for j in range(n)), width)

    @classmethod
    def random(cls, stream, n: int, width: int) -> SecretVector:
        return cls(tuple(stream.next_bits(width).value for _ in range(n)), width)


class RefreshForm(str, enum.Enum):
    DENSE = "dense"
    SPARSE = "sparse"


@dataclass(frozen=True)
class RefreshVector:
    """Fresh randomness for one session, either all n entries or (index, value) pairs."""

    form: RefreshForm
    n: int
    width: int
    entries: tuple[int, ...] = ()
    pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        top = 1 << self.width
        if self.form is RefreshForm.DENSE:
            if len(self.entries) != self.n or self.pairs:
                raise ValueError("dense refresh needs exactly n entries")
            if any(not 0 <= e < top for e in self.entries):
                raise ValueError("refresh entry out of range")
        else:
            idx = [i for i, _ in self.pairs]
            if self.entries or len(set(idx)) != len(idx):
                raise ValueError("sparse refresh needs distinct indices")
            if any(not 1 <= i <= self.n for i in idx):
                raise ValueError("sparse refresh index out of range")
            if any(not 0 <= v < top for _, v in self.pairs):
                raise ValueError("refresh entry out of range")

    @classmethod
    def dense(cls, entries: Sequence[int], width: int) -> RefreshVector:
        return cls(RefreshForm.DENSE, len(entries), width, entries=tuple(entries))

    @classmethod
    def sparse(cls, pairs: Iterable[tuple[int, int]], n: int, width: int) -> RefreshVector:
        return cls(RefreshForm.SPARSE, n, width, pairs=tuple((int(i), int(v)) for i, v in pairs))

    @property
    def is_dense(self) -> bool:
        return self.form is RefreshForm.DENSE


class Protocol(enum.IntEnum):
    AP1 = 0x01
    AP2 = 0x02
    AP2T = 0x03


class Verdict(enum.IntEnum):
    DO_NOT_OPEN = 0
    OPEN = 1

    def __str__(self) -> str:
        return "Open" if self is Verdict.OPEN else "DoNotOpen"


@dataclass(frozen=True)
class KeyMessage:
    protocol: Protocol
    session_index: int
    payload: Bits

    def __post_init__(self) -> None:
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if not 1 <= self.session_index < 1 << 32:
            raise ValueError("session index must fit in 32 bits and be positive")


@dataclass(frozen=True)
class VerdictMessage:
    verdict: Verdict

    def __post_init__(self) -> None:
        object.__setattr__(self, "verdict", Verdict(self.verdict))

    @property
    def is_open(self) -> bool:
        return self.verdict is Verdict.OPEN


OPEN = VerdictMessage(Verdict.OPEN)
DO_NOT_OPEN = VerdictMessage(Verdict.DO_NOT_OPEN)


def encode_message(msg: KeyMessage | VerdictMessage) -> bytes:
    """Frame a message: version, protocol id, session index, payload bit length, payload.

    Integers are big-endian; payload bits are packed MSB first and zero-padded
    to a byte boundary.  Verdicts use protocol id 0 and carry one payload bit.
    """
    if isinstance(msg, VerdictMessage):
        pid, idx, payload = 0x00, 0, Bits(int(msg.verdict), 1)
    else:
        pid, idx, payload = int(msg.protocol), msg.session_index, msg.payload
    return _HEADER.pack(FRAME_VERSION, pid, idx, len(payload)) + payload.to_bytes()


def decode_message(data: bytes) -> KeyMessage | VerdictMessage:
    if len(data) < _HEADER.size:
        raise FramingError("truncated header")
    version, pid, idx, nbits = _HEADER.unpack_from(data)
    if version != FRAME_VERSION:
        raise FramingError(f"unsupported frame version {version}")
    body = data[_HEADER.size:]
    if len(body) != (nbits + 7) // 8:
        raise FramingError("payload length does not match header")
    payload = Bits.from_bytes(body, nbits)
    if body and payload.value << (8 * len(body) - nbits) != int.from_bytes(body, "big"):
        raise FramingError("non-zero padding bits")
    if pid == 0x00:
        if nbits != 1 or idx != 0:
            raise FramingError("malformed verdict")
        return VerdictMessage(Verdict(payload.value))
    try:
        return KeyMessage(Protocol(pid), idx, payload)
    except ValueError as exc:
        raise FramingError(str(exc)) from exc


class Verifier:
    """Mutable holder around an immutable verifier state.

    ``handle`` commits the transition; ``probe`` only reports the verdict.
    """

    protocol: Protocol

    def __init__(self, state) -> None:
        self.state = state

    def transition(self, state, msg: KeyMessage):
        raise NotImplementedError

    def handle(self, msg: KeyMessage) -> VerdictMessage:
        verdict, self.state = self.transition(self.state, msg)
        return verdict

    def probe(self, msg: KeyMessage) -> VerdictMessage:
        return self.transition(self.state, msg)[0]

    @property
    def synced_view(self) -> tuple:
        return self.state.synced_view
