"""Seeded pseudo-random bit streams.

Tag randomness (fresh refresh vectors) and every pad used to encapsulate key
messages come from a ``PadStream``.  The generator behind a stream is chosen by
a string id so experiment outputs can name it; ``xorshift64star`` is the
default.  No cryptographic strength is claimed for it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol as _Proto

from .core import Bits

MASK64 = (1 << 64) - 1
ZERO_SEED_REMAP = 0x9E3779B97F4A7C15
DEFAULT_GENERATOR = "xorshift64star"


class WordSource(_Proto):
    state: int

    def next_word(self) -> int: ...


class XorShift64Star:
    """Vigna's xorshift64*: 12/25/27 shifts and an odd multiplier on the output."""

    MULTIPLIER = 0x2545F4914F6CDD1D

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = (seed & MASK64) or ZERO_SEED_REMAP

    def next_word(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def next_words(self, count: int) -> list[int]:
        x = self.state
        out = []
        append = out.append
        for _ in range(count):
            x ^= x >> 12
            x ^= (x << 25) & MASK64
            x ^= x >> 27
            append((x * 0x2545F4914F6CDD1D) & MASK64)
        self.state = x
        return out


_GENERATORS: dict[str, Callable[[int], WordSource]] = {DEFAULT_GENERATOR: XorShift64Star}


def register_generator(generator_id: str, factory: Callable[[int], WordSource]) -> None:
    """Make ``factory(seed)`` available under ``generator_id``."""
    _GENERATORS[generator_id] = factory


def unregister_generator(generator_id: str) -> None:
    if generator_id == DEFAULT_GENERATOR:
        raise ValueError("the default generator cannot be removed")
    _GENERATORS.pop(generator_id, None)


def available_generators() -> list[str]:
    return sorted(_GENERATORS)


class PadStream:
    """A cursor over the bit sequence determined by ``(generator_id, seed)``.

    Words are consumed most significant bit first.  Not thread safe.
    """

    __slots__ = ("generator_id", "seed", "bits_emitted", "_gen", "_buf", "_buf_len")

    def __init__(self, seed: int, generator_id: str = DEFAULT_GENERATOR) -> None:
        try:
            factory = _GENERATORS[generator_id]
        except KeyError:
            raise ValueError(f"unknown generator id {generator_id!r}") from None
        self.generator_id = generator_id
        self.seed = seed & MASK64
        self.bits_emitted = 0
        self._gen = factory(self.seed)
        self._buf = 0
        self._buf_len = 0

    def next_bits(self, count: int) -> Bits:
        if count < 0:
            raise ValueError("count must be non-negative")
        buf, have = self._buf, self._buf_len
        gen = self._gen
        while have < count:
            buf = (buf << 64) | gen.next_word()
            have += 64
        have -= count
        out = buf >> have
        self._buf = buf & ((1 << have) - 1)
        self._buf_len = have
        self.bits_emitted += count
        return Bits(out, count)

    def next_word(self) -> int:
        if self._buf_len == 0:
            self.bits_emitted += 64
            return self._gen.next_word()
        return self.next_bits(64).value

    def next_words(self, count: int) -> list[int]:
        if self._buf_len or not hasattr(self._gen, "next_words"):
            return [self.next_word() for _ in range(count)]
        self.bits_emitted += 64 * count
        return self._gen.next_words(count)

    def next_below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by Lemire's multiply-and-reject method."""
        if not 1 <= bound <= 1 << 64:
            raise ValueError("bound must be in 1..2**64")
        prod = self.next_word() * bound
        low = prod & MASK64
        if low < bound:
            threshold = ((1 << 64) - bound) % bound
            while low < threshold:
                prod = self.next_word() * bound
                low = prod & MASK64
        return prod >> 64

    def next_below_each(self, bounds: list[int]) -> list[int]:
        """Same draws as calling ``next_below`` once per bound, in order, but batched."""
        words = self.next_words(len(bounds))
        out = []
        ptr = 0
        for b in bounds:
            if ptr == len(words):
                words.extend(self.next_words(1))
            prod = words[ptr] * b
            ptr += 1
            low = prod & MASK64
            if low < b:
                threshold = ((1 << 64) - b) % b
                while low < threshold:
                    if ptr == len(words):
                        words.extend(self.next_words(1))
                    prod = words[ptr] * b
                    ptr += 1
                    low = prod & MASK64
            out.append(prod >> 64)
        return out

    def snapshot(self) -> tuple[str, int, int, int, int, int]:
        return (self.generator_id, self.seed, self._gen.state, self._buf, self._buf_len, self.bits_emitted)

    @classmethod
    def restore(cls, snap: tuple[str, int, int, int, int, int]) -> PadStream:
        gid, seed, state, buf, buf_len, emitted = snap
        s = cls(seed, gid)
        s._gen.state = state
        s._buf, s._buf_len, s.bits_emitted = buf, buf_len, emitted
        return s


def new_stream(seed: int, generator_id: str = DEFAULT_GENERATOR) -> PadStream:
    return PadStream(seed, generator_id)


def next_bits(stream: PadStream, count: int) -> Bits:
    return stream.next_bits(count)


def derive_subseeds(master: int, generator_id: str = DEFAULT_GENERATOR) -> tuple[int, int, int, int]:
    """The first four 64-bit words of the stream seeded with ``master``."""
    s = PadStream(master, generator_id)
    return (s.next_word(), s.next_word(), s.next_word(), s.next_word())


def fold_seed(value: int) -> int:
    """Fold an arbitrarily wide non-negative integer into 64 bits by xoring 64-bit chunks."""
    out = 0
    while value:
        out ^= value & MASK64
        value >>= 64
    return out


@dataclass(frozen=True)
class SeedState:
    """Chained seed: each accepted session xors the key entry it used into the seed."""

    seed: int = 0
    history_rule: str = "chained-xor"

    def advance(self, key_value: int) -> SeedState:
        return SeedState(fold_seed(key_value) ^ self.seed, self.history_rule)
