"""Intruder-in-the-middle resistant variant of AP2.

The master seed of a session is expanded into four sub-seeds.  Pads from the
first two hide the plaintext ``LRV || keyword`` and its multidimensional parity
bits; the third supplies watermark values; the fourth drives a Fisher-Yates
permutation of the whole frame.  A tamperer who cannot see the permutation
must flip at least ``d_min`` bits without touching a watermark.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .ap2 import Ap2TagState, Ap2VerifierState, Pending, accept_plaintext, ap2_tag_complete, stage_session
from .core import (
    DO_NOT_OPEN,
    OPEN,
    Bits,
    KeyMessage,
    Protocol,
    ProtocolParams,
    VerdictMessage,
    Verifier,
    key_entry_index,
)
from .padstream import DEFAULT_GENERATOR, PadStream, derive_subseeds

# -- multidimensional parity code --------------------------------------------


def grid_side(m: int, dims: int) -> int:
    """Smallest s with s**dims >= m."""
    s = 1
    while s**dims < m:
        s += 1
    return s


def redundancy_bits(m: int, dims: int) -> int:
    s = grid_side(m, dims)
    return dims * s ** (dims - 1)


@lru_cache(maxsize=256)
def parity_masks(m: int, dims: int) -> tuple[int, ...]:
    """One payload mask per redundancy bit, ordered by axis (last axis first) then line.

    Payload bit p sits at grid coordinates given by the base-s digits of p, most
    significant digit first; cells at p >= m are zero padding.  The mask for a
    line is in ``Bits.value`` orientation (bit p at ``1 << (m - 1 - p)``).
    """
    if dims < 1:
        raise ValueError("dims must be at least 1")
    s = grid_side(m, dims)
    lines_per_axis = s ** (dims - 1)
    masks: list[int] = []
    for axis in reversed(range(dims)):
        axis_masks = [0] * lines_per_axis
        for p in range(m):
            coords = []
            x = p
            for _ in range(dims):
                coords.append(x % s)
                x //= s
            coords.reverse()
            line = 0
            for a, c in enumerate(coords):
                if a != axis:
                    line = line * s + c
            axis_masks[line] |= 1 << (m - 1 - p)
        masks.extend(axis_masks)
    return tuple(masks)


def parity_encode(payload: Bits, dims: int) -> Bits:
    """Redundancy bits: the xor of every grid line, for every dimension."""
    v = payload.value
    out = 0
    for mask in parity_masks(len(payload), dims):
        out = (out << 1) | ((v & mask).bit_count() & 1)
    return Bits(out, redundancy_bits(len(payload), dims))


def parity_verify(payload: Bits, redundancy: Bits, dims: int) -> bool:
    if len(redundancy) != redundancy_bits(len(payload), dims):
        return False
    return parity_encode(payload, dims) == redundancy


# -- frame layout and bound --------------------------------------------------


@dataclass(frozen=True)
class FrameLayout:
    m: int
    q: int
    v: int
    t: int
    dims: int

    def __post_init__(self) -> None:
        if self.t != self.m + self.q + self.v:
            raise ValueError("t must equal m + q + v")
        if self.q != redundancy_bits(self.m, self.dims):
            raise ValueError("q does not match the parity code over m bits")
        if self.v < 0:
            raise ValueError("v must be non-negative")

    @classmethod
    def for_params(cls, params: ProtocolParams, dims: int | None = None, v: int | None = None) -> FrameLayout:
        """Defaults: dims = round(log2(n*l)), v = m + q so that watermarks fill half the frame."""
        if dims is None:
            dims = max(1, round(math.log2(params.n * params.l)))
        m = params.m
        q = redundancy_bits(m, dims)
        if v is None:
            v = m + q
        return cls(m, q, v, m + q + v, dims)


@dataclass(frozen=True)
class SecurityBound:
    d_min: int
    alpha: float
    p_a_bound: float


def compute_security_bound(layout: FrameLayout) -> SecurityBound:
    alpha = layout.v / layout.t
    d_min = layout.dims + 1
    return SecurityBound(d_min, alpha, (1.0 - alpha) ** d_min)


# -- permutation -------------------------------------------------------------


@dataclass(frozen=True)
class PermutationSpec:
    """Bijection on frame positions; ``forward(x)[k] == x[mapping[k]]``."""

    size: int
    mapping: tuple[int, ...]
    inverse_mapping: tuple[int, ...]

    def forward(self, bits: Bits) -> Bits:
        return bits.gather(self.mapping)

    def inverse(self, bits: Bits) -> Bits:
        return bits.gather(self.inverse_mapping)


def permutation_from_seed(seed: int, t: int, generator_id: str = DEFAULT_GENERATOR) -> PermutationSpec:
    if t < 1:
        raise ValueError("t must be at least 1")
    rng = PadStream(seed, generator_id)
    perm = list(range(t))
    draws = rng.next_below_each(list(range(t, 1, -1)))
    for i, j in zip(range(t - 1, 0, -1), draws):
        perm[i], perm[j] = perm[j], perm[i]
    inv = [0] * t
    for k, src in enumerate(perm):
        inv[src] = k
    return PermutationSpec(t, tuple(perm), tuple(inv))


# -- protocol ----------------------------------------------------------------


@dataclass(frozen=True)
class SessionMaterial:
    c1: Bits
    c2: Bits
    c3: Bits
    perm: PermutationSpec


@lru_cache(maxsize=2048)
def session_material(master: int, layout: FrameLayout, generator_id: str = DEFAULT_GENERATOR) -> SessionMaterial:
    """Pads, watermark values and permutation for one master seed (pure, memoised)."""
    s1, s2, s3, s4 = derive_subseeds(master, generator_id)
    return SessionMaterial(
        PadStream(s1, generator_id).next_bits(layout.m),
        PadStream(s2, generator_id).next_bits(layout.q),
        PadStream(s3, generator_id).next_bits(layout.v),
        permutation_from_seed(s4, layout.t, generator_id),
    )


def _check_layout(params: ProtocolParams, layout: FrameLayout) -> None:
    if layout.m != params.m:
        raise ValueError(f"layout m={layout.m} does not match n*l+keyword_len={params.m}")


def seal_frame(plaintext: Bits, master: int, layout: FrameLayout, generator_id: str = DEFAULT_GENERATOR) -> Bits:
    """Encode, encrypt, watermark and permute one plaintext under ``master``."""
    mat = session_material(master, layout, generator_id)
    red = parity_encode(plaintext, layout.dims) ^ mat.c2
    return mat.perm.forward((plaintext ^ mat.c1) + red + mat.c3)


def unseal_frame(
    payload: Bits, master: int, layout: FrameLayout, generator_id: str = DEFAULT_GENERATOR
) -> Bits | None:
    """Invert ``seal_frame``; None if the watermarks or the parity code do not check out.

    Watermarks are checked first since a random flip hits one with probability v/t.
    """
    if len(payload) != layout.t:
        return None
    mat = session_material(master, layout, generator_id)
    frame = mat.perm.inverse(payload).value
    v, q = layout.v, layout.q
    if frame & ((1 << v) - 1) != mat.c3.value:
        return None
    red = Bits(((frame >> v) & ((1 << q) - 1)) ^ mat.c2.value, q)
    plaintext = Bits(frame >> (v + q), layout.m) ^ mat.c1
    if not parity_verify(plaintext, red, layout.dims):
        return None
    return plaintext


def ap2t_tag_build_message(st: Ap2TagState, keyword: Bits | None, layout: FrameLayout) -> KeyMessage:
    _check_layout(st.params, layout)
    _, staged, lrv, keyword, plaintext = stage_session(st, keyword)
    y = seal_frame(plaintext, staged.seed, layout, st.generator_id)
    st.pending = Pending(lrv, keyword, staged, plaintext)
    return KeyMessage(Protocol.AP2T, st.i, y)


def ap2t_verifier_handle(
    st: Ap2VerifierState, msg: KeyMessage, layout: FrameLayout
) -> tuple[VerdictMessage, Ap2VerifierState]:
    p = st.params
    if msg.protocol is not Protocol.AP2T:
        return DO_NOT_OPEN, st
    ke = key_entry_index(p.n, st.i)
    staged = st.seed.advance(st.arv.entry(ke))
    plaintext = unseal_frame(msg.payload, staged.seed, layout, st.generator_id)
    if plaintext is None or plaintext[p.n * p.l :] not in p.keyword_set:
        return DO_NOT_OPEN, st
    return OPEN, accept_plaintext(st, ke, staged, plaintext)


class Ap2tTag:
    """Endpoint wrapper binding an AP2 tag state to a frame layout."""

    protocol = Protocol.AP2T

    def __init__(self, state: Ap2TagState, layout: FrameLayout) -> None:
        _check_layout(state.params, layout)
        self.state = state
        self.layout = layout

    def begin(self, keyword: Bits | None = None) -> KeyMessage:
        return ap2t_tag_build_message(self.state, keyword, self.layout)

    def complete(self, verdict: VerdictMessage) -> None:
        ap2_tag_complete(self.state, verdict)

    @property
    def synced_view(self) -> tuple:
        return self.state.synced_view

    @property
    def pending(self):
        return self.state.pending


class Ap2tVerifier(Verifier):
    protocol = Protocol.AP2T

    def __init__(self, state: Ap2VerifierState, layout: FrameLayout) -> None:
        _check_layout(state.params, layout)
        super().__init__(state)
        self.layout = layout

    def transition(self, state: Ap2VerifierState, msg: KeyMessage):
        return ap2t_verifier_handle(state, msg, self.layout)
