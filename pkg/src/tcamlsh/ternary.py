"""Ternary alphabet, packed ternary words and TCAM match semantics.

A word of ``width`` ternions is stored as two parallel bit-planes held in
``uint64`` chunks: a *care* plane (bit clear means ``*``) and a *value*
plane.  Position ``i`` lives in chunk ``i // 64`` at bit ``i % 64``.  Value
bits under a clear care bit are always zero, so two words are equal exactly
when their planes are bit-identical.
"""

from __future__ import annotations

import struct
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

CHUNK_BITS = 64

_TEXT = {"0": 0, "1": 1, "*": 2}


class Ternion(IntEnum):
    ZERO = 0
    ONE = 1
    STAR = 2

    @property
    def char(self) -> str:
        return "01*"[self]


def ternion_match(a: Ternion, b: Ternion) -> bool:
    """Return True when ``a`` and ``b`` are equal or either one is ``*``."""
    return a == b or a == Ternion.STAR or b == Ternion.STAR


def n_chunks(width: int) -> int:
    return (width + CHUNK_BITS - 1) // CHUNK_BITS


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean array ``(..., width)`` into ``(..., n_chunks)`` uint64.

    Bit ``i`` of the last axis goes to chunk ``i // 64``, bit ``i % 64``.
    """
    bits = np.asarray(bits, dtype=bool)
    width = bits.shape[-1]
    nc = n_chunks(width)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    pad = nc * 8 - packed.shape[-1]
    if pad:
        widths = [(0, 0)] * (packed.ndim - 1) + [(0, pad)]
        packed = np.pad(packed, widths)
    packed = np.ascontiguousarray(packed)
    return packed.view("<u8").astype(np.uint64, copy=False).reshape(*bits.shape[:-1], nc)


def unpack_bits(chunks: np.ndarray, width: int) -> np.ndarray:
    chunks = np.ascontiguousarray(chunks, dtype="<u8")
    raw = chunks.view(np.uint8)
    return np.unpackbits(raw, axis=-1, bitorder="little", count=width).astype(bool)


class TernaryWord:
    """Immutable fixed-width vector of ternions in packed form.

    Build one with :meth:`from_ternions`, :meth:`from_text` or
    :meth:`from_planes`; the planes are canonicalized and frozen.
    """

    __slots__ = ("_width", "_value", "_care")

    def __init__(self, width: int, value: np.ndarray, care: np.ndarray):
        if width < 0:
            raise ValueError(f"width must be non-negative, got {width}")
        nc = n_chunks(width)
        value = np.array(value, dtype=np.uint64).reshape(-1)
        care = np.array(care, dtype=np.uint64).reshape(-1)
        if value.shape != (nc,) or care.shape != (nc,):
            raise ValueError(f"expected {nc} chunks for width {width}")
        if nc and width % CHUNK_BITS:
            care[-1] &= np.uint64((1 << (width % CHUNK_BITS)) - 1)
        value &= care
        value.flags.writeable = False
        care.flags.writeable = False
        self._width = width
        self._value = value
        self._care = care

    @classmethod
    def from_planes(cls, width: int, value: np.ndarray, care: np.ndarray) -> TernaryWord:
        return cls(width, value, care)

    @classmethod
    def from_ternions(cls, ternions: Iterable[int]) -> TernaryWord:
        t = np.fromiter((int(x) for x in ternions), dtype=np.int8)
        if np.any((t < 0) | (t > 2)):
            raise ValueError("ternion values must be 0, 1 or 2 (star)")
        care = pack_bits(t != Ternion.STAR)
        value = pack_bits(t == Ternion.ONE)
        return cls(len(t), value, care)

    @classmethod
    def from_text(cls, text: str) -> TernaryWord:
        return decode_text(text)

    @classmethod
    def all_star(cls, width: int) -> TernaryWord:
        nc = n_chunks(width)
        return cls(width, np.zeros(nc, np.uint64), np.zeros(nc, np.uint64))

    @property
    def width(self) -> int:
        return self._width

    @property
    def value(self) -> np.ndarray:
        return self._value

    @property
    def care(self) -> np.ndarray:
        return self._care

    def ternions(self) -> list[Ternion]:
        care = unpack_bits(self._care, self._width)
        value = unpack_bits(self._value, self._width)
        codes = np.where(care, value.astype(np.int8), np.int8(Ternion.STAR))
        return [Ternion(int(c)) for c in codes]

    def __len__(self) -> int:
        return self._width

    def __getitem__(self, i: int) -> Ternion:
        if not -self._width <= i < self._width:
            raise IndexError(i)
        i %= self._width
        chunk, bit = divmod(i, CHUNK_BITS)
        if not (int(self._care[chunk]) >> bit) & 1:
            return Ternion.STAR
        return Ternion((int(self._value[chunk]) >> bit) & 1)

    def __iter__(self):
        return iter(self.ternions())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TernaryWord):
            return NotImplemented
        return (
            self._width == other._width
            and np.array_equal(self._care, other._care)
            and np.array_equal(self._value, other._value)
        )

    def __hash__(self) -> int:
        return hash((self._width, self._care.tobytes(), self._value.tobytes()))

    def __repr__(self) -> str:
        text = encode_text(self)
        if len(text) > 40:
            text = text[:37] + "..."
        return f"TernaryWord({text!r}, width={self._width})"

    def __str__(self) -> str:
        return encode_text(self)

    def to_bytes(self) -> bytes:
        return encode_binary(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> TernaryWord:
        word, _ = decode_binary(data)
        return word


def word_match(query: TernaryWord, entry: TernaryWord) -> bool:
    """Positionwise ``=_T`` over two words of equal width."""
    if query.width != entry.width:
        raise ValueError(f"width mismatch: {query.width} != {entry.width}")
    diff = (query.value ^ entry.value) & query.care & entry.care
    return not diff.any()


def encode_text(word: TernaryWord) -> str:
    """Render ``word`` as one of ``0``, ``1``, ``*`` per position, position 0 first."""
    return "".join(t.char for t in word.ternions())


def decode_text(text: str) -> TernaryWord:
    if not text:
        raise ValueError("empty ternary string")
    try:
        codes = [_TEXT[ch] for ch in text]
    except KeyError as exc:
        raise ValueError(f"invalid ternary character {exc.args[0]!r}") from None
    return TernaryWord.from_ternions(codes)


def _plane_bytes(plane: np.ndarray, width: int) -> bytes:
    return plane.astype("<u8").tobytes()[: (width + 7) // 8]


def _bytes_plane(data: bytes, width: int) -> np.ndarray:
    nc = n_chunks(width)
    buf = data + b"\x00" * (nc * 8 - len(data))
    return np.frombuffer(buf, dtype="<u8").astype(np.uint64)


def encode_binary(word: TernaryWord) -> bytes:
    """8-byte LE width, then the care plane, then the value plane.

    Each plane takes ``ceil(width / 8)`` bytes, LSB-first within a byte.
    """
    w = word.width
    return struct.pack("<Q", w) + _plane_bytes(word.care, w) + _plane_bytes(word.value, w)


def decode_binary(data: bytes, offset: int = 0) -> tuple[TernaryWord, int]:
    """Decode one word at ``offset``; return it with the offset just past it."""
    if len(data) - offset < 8:
        raise ValueError("truncated ternary word header")
    (w,) = struct.unpack_from("<Q", data, offset)
    nb = (w + 7) // 8
    start = offset + 8
    end = start + 2 * nb
    if len(data) < end:
        raise ValueError("truncated ternary word payload")
    care = _bytes_plane(data[start : start + nb], w)
    value = _bytes_plane(data[start + nb : end], w)
    return TernaryWord(w, value, care), end


def words_from_codes(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pack an ``(n, width)`` array of ternion codes into ``(value, care)`` planes."""
    codes = np.asarray(codes)
    care = pack_bits(codes != Ternion.STAR)
    value = pack_bits(codes == Ternion.ONE)
    return value, care


def stack_words(words: Sequence[TernaryWord]) -> tuple[np.ndarray, np.ndarray]:
    if not words:
        return np.zeros((0, 0), np.uint64), np.zeros((0, 0), np.uint64)
    return np.stack([w.value for w in words]), np.stack([w.care for w in words])
