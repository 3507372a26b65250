"""Bit-exact fixed-width codec for sparse binary observations.

Each transcript spends ``header_bits = ceil(log2(d+1))`` bits on the exact
support count and the remaining ``payload_bits`` on an enumerative index of
a subsampled support with at most ``kprime`` ones.  The codebook orders
supports by popcount ascending, then colexicographically within each
popcount class, which makes ranks deterministic and the code a bijection
onto ``0 .. sum_j C(d, j) - 1``.

``kprime`` is the largest sparsity the payload can address exactly; this
dominates the looser rule of thumb ``(k - log d) / log d`` and can be 0 for
very small budgets, in which case the config is flagged degenerate (the
payload can only name the empty set).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .model import Observation


class CodecError(Exception):
    """Base class for codec failures."""


class BudgetTooSmall(CodecError):
    """The bit budget cannot hold the count header plus one payload bit."""


class TooManyOnes(CodecError):
    """A support exceeds the codebook's sparsity limit."""


class RankOutOfRange(CodecError):
    """A rank falls outside the codebook."""


class MalformedMessage(CodecError):
    """A message violates the format for its config."""


class LengthMismatch(CodecError):
    """A serialized string does not have exactly k bits."""


def ceil_log2(x: int) -> int:
    """Smallest integer b with 2**b >= x, for x >= 1."""
    return (int(x) - 1).bit_length()


def codebook_size(d: int, kprime: int) -> int:
    """Number of binary vectors of length d with at most kprime ones."""
    return sum(math.comb(d, j) for j in range(kprime + 1))


@dataclass(frozen=True)
class CodecConfig:
    """Derived field widths for a (dimension, bit budget) pair."""

    d: int
    k: int
    header_bits: int
    payload_bits: int
    kprime: int

    @property
    def degenerate(self) -> bool:
        return self.kprime == 0

    @property
    def codebook(self) -> int:
        return codebook_size(self.d, self.kprime)


def make_config(d: int, k: int) -> CodecConfig:
    """Build the codec config for dimension ``d`` and bit budget ``k``.

    The intended operating regime is ``k >= 2 * ceil(log2 d)``; smaller
    budgets down to header + 1 bits are allowed but may come out degenerate
    (``kprime == 0``).
    """
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    header = ceil_log2(d + 1)
    if k < header + 1:
        raise BudgetTooSmall(
            f"k={k} cannot hold the {header}-bit count header plus a payload bit"
        )
    payload = k - header
    capacity = 1 << payload
    kprime = 0
    total = 1
    while kprime < d:
        total += math.comb(d, kprime + 1)
        if total > capacity:
            break
        kprime += 1
    return CodecConfig(d=d, k=k, header_bits=header, payload_bits=payload, kprime=kprime)


@dataclass(frozen=True)
class Message:
    """A k-bit transcript: exact count plus enumerative payload index."""

    count: int
    payload_index: int
    bit_length: int


@dataclass(frozen=True, eq=False)
class SubsampledObservation:
    """A support capped at kprime ones, remembering the original count.

    ``signs`` rides along for signed observations; it is populated by
    :func:`subsample` (the encoder side, which sees the sample) and left
    ``None`` by :func:`decode` (a transcript carries no sign bits).
    """

    d: int
    support: np.ndarray
    original_count: int
    signs: Optional[np.ndarray] = None

    def __post_init__(self):
        sup = np.array(self.support, dtype=np.int64, copy=True)
        sup.setflags(write=False)
        object.__setattr__(self, "support", sup)
        if self.signs is not None:
            sg = np.array(self.signs, dtype=np.int64, copy=True)
            sg.setflags(write=False)
            object.__setattr__(self, "signs", sg)


def rank_sparse(support: Sequence[int], d: int, kprime: int) -> int:
    """Rank of a sorted support in the at-most-kprime-ones codebook.

    Vectors are ordered by popcount ascending, then colexicographically
    within each popcount class; the in-class rank of ``{s_0 < ... < s_{m-1}}``
    is ``sum_i C(s_i, i+1)`` (combinatorial number system).
    """
    sup = [int(i) for i in support]
    m = len(sup)
    if m > kprime:
        raise TooManyOnes(f"support has {m} ones, codebook allows {kprime}")
    for i, idx in enumerate(sup):
        if idx < 0 or idx >= d or (i > 0 and idx <= sup[i - 1]):
            raise ValueError("support must be strictly increasing indices in [0, d)")
    rank = codebook_size(d, m - 1) if m > 0 else 0
    for i, idx in enumerate(sup):
        rank += math.comb(idx, i + 1)
    return rank


def unrank_sparse(rank: int, d: int, kprime: int) -> list[int]:
    """Inverse of :func:`rank_sparse` over the full codebook."""
    rank = int(rank)
    if rank < 0 or rank >= codebook_size(d, kprime):
        raise RankOutOfRange(f"rank {rank} outside codebook of size {codebook_size(d, kprime)}")
    m = 0
    rem = rank
    while rem >= math.comb(d, m):
        rem -= math.comb(d, m)
        m += 1
    support: list[int] = []
    ceiling = d  # candidates are strictly below the previously chosen index
    for i in range(m - 1, -1, -1):
        c = ceiling - 1
        while math.comb(c, i + 1) > rem:
            c -= 1
        support.append(c)
        rem -= math.comb(c, i + 1)
        ceiling = c
    support.reverse()
    return support


def subsample(
    obs: Observation, cfg: CodecConfig, rng: np.random.Generator
) -> SubsampledObservation:
    """Keep a uniformly random kprime-subset of the support when it is larger.

    Supports with at most kprime ones pass through unchanged.  The uniform
    subset is realized by attaching an iid uniform key to each support index
    and keeping the kprime largest keys.
    """
    if obs.d != cfg.d:
        raise ValueError(f"observation dimension {obs.d} != config dimension {cfg.d}")
    m = obs.count
    if m <= cfg.kprime:
        return SubsampledObservation(obs.d, obs.support, m, obs.signs)
    if cfg.kprime == 0:  # degenerate budget: only the count survives
        empty = np.empty(0, dtype=np.int64)
        signs = empty if obs.signs is not None else None
        return SubsampledObservation(obs.d, empty, m, signs)
    keys = rng.random(m)
    picked = np.sort(np.argpartition(keys, m - cfg.kprime)[m - cfg.kprime :])
    signs = obs.signs[picked] if obs.signs is not None else None
    return SubsampledObservation(obs.d, obs.support[picked], m, signs)


def encode(obs: Observation, cfg: CodecConfig, rng: np.random.Generator) -> Message:
    """Encode one observation into a k-bit message."""
    sub = subsample(obs, cfg, rng)
    payload = rank_sparse(sub.support.tolist(), cfg.d, cfg.kprime)
    return Message(count=sub.original_count, payload_index=payload, bit_length=cfg.k)


def decode(msg: Message, cfg: CodecConfig) -> SubsampledObservation:
    """Recover the subsampled support and the original count from a message."""
    if not 0 <= msg.count <= cfg.d:
        raise MalformedMessage(f"count {msg.count} outside [0, {cfg.d}]")
    if not 0 <= msg.payload_index < cfg.codebook:
        raise MalformedMessage(f"payload {msg.payload_index} outside codebook")
    if msg.bit_length != cfg.k:
        raise MalformedMessage(f"bit length {msg.bit_length} != k={cfg.k}")
    support = unrank_sparse(msg.payload_index, cfg.d, cfg.kprime)
    if len(support) != min(msg.count, cfg.kprime):
        raise MalformedMessage(
            f"payload has {len(support)} ones, count {msg.count} implies "
            f"{min(msg.count, cfg.kprime)}"
        )
    return SubsampledObservation(cfg.d, np.array(support, dtype=np.int64), msg.count)


def serialize(msg: Message, cfg: CodecConfig) -> str:
    """Fixed-width big-endian bit string: count header then payload index."""
    if msg.bit_length != cfg.k:
        raise LengthMismatch(f"message bit length {msg.bit_length} != k={cfg.k}")
    if not 0 <= msg.count < (1 << cfg.header_bits):
        raise MalformedMessage(f"count {msg.count} does not fit the header")
    if not 0 <= msg.payload_index < (1 << cfg.payload_bits):
        raise MalformedMessage(f"payload {msg.payload_index} does not fit")
    return f"{msg.count:0{cfg.header_bits}b}{msg.payload_index:0{cfg.payload_bits}b}"


def deserialize(bits: str, cfg: CodecConfig) -> Message:
    """Inverse of :func:`serialize`."""
    if len(bits) != cfg.k:
        raise LengthMismatch(f"expected exactly {cfg.k} bits, got {len(bits)}")
    if set(bits) - {"0", "1"}:
        raise MalformedMessage("bit string may contain only '0' and '1'")
    count = int(bits[: cfg.header_bits], 2)
    payload = int(bits[cfg.header_bits :], 2)
    return Message(count=count, payload_index=payload, bit_length=cfg.k)


# --- batch paths -----------------------------------------------------------
#
# The Monte Carlo harness encodes and decodes millions of observations; the
# batch functions below run the same subsample / rank / unrank algorithms on
# whole (rows, d) matrices at once.  Exhaustive tests pin them to the scalar
# functions.  Ranks are held in int64, so the vectorized path requires the
# codebook to fit; larger codebooks fall back to the scalar code per row.

_INT64_SAFE = 1 << 62


@lru_cache(maxsize=None)
def _comb_table(d: int, kmax: int) -> np.ndarray:
    """comb(i, j) for 0 <= i <= d, 0 <= j <= kmax, as read-only int64."""
    table = np.zeros((d + 1, kmax + 1), dtype=np.int64)
    for i in range(d + 1):
        for j in range(kmax + 1):
            table[i, j] = math.comb(i, j)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def _class_offsets(d: int, kprime: int) -> np.ndarray:
    """offsets[m] = number of codebook vectors with popcount < m."""
    offsets = np.zeros(kprime + 2, dtype=np.int64)
    for m in range(1, kprime + 2):
        offsets[m] = offsets[m - 1] + math.comb(d, m - 1)
    offsets.setflags(write=False)
    return offsets


def batch_fits_int64(cfg: CodecConfig) -> bool:
    return cfg.codebook <= _INT64_SAFE


def subsample_mask(
    x: np.ndarray, kprime: int, rng: np.random.Generator
) -> np.ndarray:
    """Row-wise uniform subsampling of nonzero positions down to kprime.

    Returns a boolean mask selecting, per row, all nonzero positions when
    there are at most kprime of them, else a uniformly random kprime-subset
    (iid uniform keys, keep the largest).
    """
    nonzero = x != 0
    counts = nonzero.sum(axis=1)
    kept = np.minimum(counts, kprime)
    keys = np.where(nonzero, rng.random(x.shape), -1.0)
    order = np.argsort(np.argsort(-keys, axis=1, kind="stable"), axis=1)
    return nonzero & (order < kept[:, None])


def encode_batch(
    x: np.ndarray, cfg: CodecConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode a (rows, d) matrix of binary/signed samples.

    Returns ``(counts, payloads, kept_mask)`` where the first two columns
    are the message fields per row and ``kept_mask`` marks the subsampled
    support (the encoder-side view, used to carry signs out of band).
    """
    if x.shape[1] != cfg.d:
        raise ValueError(f"matrix has dimension {x.shape[1]}, config wants {cfg.d}")
    counts = (x != 0).sum(axis=1).astype(np.int64)
    mask = subsample_mask(x, cfg.kprime, rng)
    if not batch_fits_int64(cfg):
        payloads = np.array(
            [
                rank_sparse(np.flatnonzero(row).tolist(), cfg.d, cfg.kprime)
                for row in mask
            ],
            dtype=object,
        )
        return counts, payloads, mask
    kept = mask.sum(axis=1).astype(np.int64)
    offsets = _class_offsets(cfg.d, cfg.kprime)
    payloads = offsets[kept].copy()
    rows, cols = np.nonzero(mask)
    if rows.size:
        table = _comb_table(cfg.d, cfg.kprime)
        starts = np.concatenate(([0], np.cumsum(kept)[:-1]))
        pos = np.arange(rows.size) - starts[rows]
        np.add.at(payloads, rows, table[cols, pos + 1])
    return counts, payloads, mask


def decode_batch(
    counts: np.ndarray, payloads: np.ndarray, cfg: CodecConfig
) -> np.ndarray:
    """Decode message fields back to a (rows, d) boolean support mask."""
    counts = np.asarray(counts)
    n = counts.shape[0]
    mask = np.zeros((n, cfg.d), dtype=bool)
    if not batch_fits_int64(cfg):
        for i in range(n):
            sup = unrank_sparse(int(payloads[i]), cfg.d, cfg.kprime)
            mask[i, sup] = True
        return mask
    payloads = np.asarray(payloads, dtype=np.int64)
    if payloads.size and (payloads.min() < 0 or payloads.max() >= cfg.codebook):
        raise RankOutOfRange("payload outside codebook")
    offsets = _class_offsets(cfg.d, cfg.kprime)
    m = np.searchsorted(offsets, payloads, side="right") - 1
    rem = payloads - offsets[m]
    table = _comb_table(cfg.d, cfg.kprime)
    rows = np.arange(n)
    for i in range(cfg.kprime - 1, -1, -1):
        active = m > i
        if not np.any(active):
            continue
        col = table[: cfg.d, i + 1]
        c = np.searchsorted(col, rem[active], side="right") - 1
        mask[rows[active], c] = True
        rem[active] -= col[c]
    return mask
