"""Software TCAM: priority-ordered ternary entries with first/all-match lookup.

Address 0 is the highest priority.  Entries are appended and never deleted;
tables are rebuilt, not edited.  Internally the planes are kept transposed
(one contiguous row per 64-ternion chunk) so a lookup scans chunk by chunk
and drops non-matching candidates early.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .ternary import TernaryWord, decode_text, encode_text, n_chunks


class TcamError(ValueError):
    pass


class CapacityError(TcamError):
    pass


@dataclass(frozen=True)
class HardwareProfile:
    """Caps that emulate a physical part (entry count and word width)."""

    entries: int
    width: int
    name: str = ""


# Commercial parts ship in 72/144/288-ternion configurations.
HW_288x512K = HardwareProfile(entries=512 * 1024, width=288, name="288x512K")


class Match(NamedTuple):
    address: int
    payload: int


class TcamTable:
    """Priority-ordered list of ``(TernaryWord, payload)`` entries."""

    def __init__(self, width: int, capacity: Optional[int] = None, profile: Optional[HardwareProfile] = None):
        if width < 0:
            raise TcamError(f"width must be non-negative, got {width}")
        if profile is not None:
            if width > profile.width:
                raise TcamError(f"width {width} exceeds hardware profile {profile.name or profile.width}")
            capacity = profile.entries if capacity is None else min(capacity, profile.entries)
        self.width = width
        self.capacity = capacity
        self.profile = profile
        self._nc = n_chunks(width)
        self._blocks: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._count = 0
        self._value_t: Optional[np.ndarray] = None
        self._care_t: Optional[np.ndarray] = None
        self._payloads: Optional[np.ndarray] = None
        self._frozen = False
        self._lock = threading.Lock()
        self.lookups = 0
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return self._count

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _reserve(self, k: int) -> int:
        if self._frozen:
            raise TcamError("table is frozen")
        if self.capacity is not None and self._count + k > self.capacity:
            raise CapacityError(f"capacity {self.capacity} exceeded")
        start = self._count
        self._count += k
        self._value_t = None
        return start

    def program(self, word: TernaryWord, payload: int) -> int:
        """Append ``word`` at the next address and return that address."""
        if word.width != self.width:
            raise TcamError(f"word width {word.width} != table width {self.width}")
        addr = self._reserve(1)
        self._blocks.append((word.value[None, :].copy(), word.care[None, :].copy(), np.array([payload], np.int64)))
        return addr

    def program_planes(self, value: np.ndarray, care: np.ndarray, payloads: Iterable[int]) -> range:
        """Bulk append packed ``(n, n_chunks)`` planes; returns the address range."""
        value = np.asarray(value, dtype=np.uint64)
        care = np.asarray(care, dtype=np.uint64)
        payloads = np.asarray(list(payloads) if not isinstance(payloads, np.ndarray) else payloads, dtype=np.int64)
        n = len(payloads)
        if value.shape != (n, self._nc) or care.shape != (n, self._nc):
            raise TcamError(f"planes must have shape ({n}, {self._nc}) for width {self.width}")
        start = self._reserve(n)
        self._blocks.append((value & care, care.copy(), payloads.copy()))
        return range(start, start + n)

    def freeze(self) -> TcamTable:
        self._consolidate()
        self._frozen = True
        return self

    def _consolidate(self) -> None:
        if self._value_t is not None:
            return
        if self._blocks:
            value = np.concatenate([b[0] for b in self._blocks], axis=0)
            care = np.concatenate([b[1] for b in self._blocks], axis=0)
            payloads = np.concatenate([b[2] for b in self._blocks])
        else:
            value = care = np.zeros((0, self._nc), np.uint64)
            payloads = np.zeros(0, np.int64)
        self._blocks = [(value, care, payloads)] if len(payloads) else []
        self._value_t = np.ascontiguousarray(value.T)
        self._care_t = np.ascontiguousarray(care.T)
        self._payloads = payloads

    def entry(self, address: int) -> tuple[TernaryWord, int]:
        self._consolidate()
        if not 0 <= address < self._count:
            raise IndexError(address)
        word = TernaryWord.from_planes(self.width, self._value_t[:, address], self._care_t[:, address])
        return word, int(self._payloads[address])

    @property
    def payloads(self) -> np.ndarray:
        self._consolidate()
        return self._payloads

    def planes(self) -> tuple[np.ndarray, np.ndarray]:
        """``(value, care)`` as ``(n, n_chunks)`` arrays in address order."""
        self._consolidate()
        return self._value_t.T, self._care_t.T

    # --- lookup ----------------------------------------------------------------

    def _check_query(self, query: TernaryWord) -> None:
        if query.width != self.width:
            raise TcamError(f"query width {query.width} != table width {self.width}")

    def _scan(self, qv: np.ndarray, qc: np.ndarray, lo: int, hi: int) -> np.ndarray:
        V, C = self._value_t, self._care_t
        cand: Optional[np.ndarray] = None
        for k in range(self._nc):
            qck = qc[k]
            if not qck:
                continue
            if cand is None:
                bad = (V[k, lo:hi] ^ qv[k]) & C[k, lo:hi] & qck
                cand = np.flatnonzero(bad == 0) + lo
            else:
                bad = (V[k, cand] ^ qv[k]) & C[k, cand] & qck
                cand = cand[bad == 0]
            if cand.size == 0:
                break
        if cand is None:
            cand = np.arange(lo, hi)
        return cand

    def _count_lookup(self, hit: bool) -> None:
        with self._lock:
            self.lookups += 1
            if hit:
                self.hits += 1
            else:
                self.misses += 1

    def match_addresses(self, query: TernaryWord, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        """Sorted matching addresses in ``[start, stop)``; does not touch counters."""
        self._check_query(query)
        self._consolidate()
        stop = self._count if stop is None else min(stop, self._count)
        if start >= stop:
            return np.zeros(0, np.int64)
        return self._scan(query.value, query.care, start, stop)

    def lookup_first(self, query: TernaryWord) -> Optional[Match]:
        """Lowest-address matching entry, or None."""
        hits = self.match_addresses(query)
        self._count_lookup(hits.size > 0)
        if hits.size == 0:
            return None
        a = int(hits[0])
        return Match(a, int(self._payloads[a]))

    def lookup_all(self, query: TernaryWord) -> list[Match]:
        """Every matching entry in increasing address order."""
        hits = self.match_addresses(query)
        self._count_lookup(hits.size > 0)
        return [Match(int(a), int(p)) for a, p in zip(hits, self._payloads[hits])]

    def lookup_all_array(self, query: TernaryWord) -> tuple[np.ndarray, np.ndarray]:
        """``(addresses, payloads)`` arrays of every match; one counted lookup."""
        hits = self.match_addresses(query)
        self._count_lookup(hits.size > 0)
        return hits, self._payloads[hits]

    def lookup_first_segmented(self, segments: Sequence[tuple[int, int, TernaryWord]]) -> Optional[Match]:
        """One lookup where each address range ``[start, stop)`` sees its own key.

        Models a single search over a table partitioned into blocks that are
        keyed differently; the lowest matching address across all blocks wins.
        """
        self._consolidate()
        best = None
        for start, stop, word in sorted(segments, key=lambda s: s[0]):
            hits = self.match_addresses(word, start, stop)
            if hits.size:
                best = int(hits[0])
                break
        self._count_lookup(best is not None)
        if best is None:
            return None
        return Match(best, int(self._payloads[best]))

    # --- serialization ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Binary dump: ``(width, count)`` uint64 LE header, then per-entry word + int64 payload."""
        self._consolidate()
        w, n = self.width, self._count
        nb = (w + 7) // 8
        rec = 8 + 2 * nb + 8
        out = np.zeros((n, rec), np.uint8)
        out[:, :8] = np.frombuffer(struct.pack("<Q", w), np.uint8)
        if nb:
            care = np.ascontiguousarray(self._care_t.T).astype("<u8").view(np.uint8).reshape(n, 8 * self._nc)
            value = np.ascontiguousarray(self._value_t.T).astype("<u8").view(np.uint8).reshape(n, 8 * self._nc)
            out[:, 8 : 8 + nb] = care[:, :nb]
            out[:, 8 + nb : 8 + 2 * nb] = value[:, :nb]
        out[:, 8 + 2 * nb :] = self._payloads.astype("<i8").view(np.uint8).reshape(n, 8)
        return struct.pack("<QQ", w, n) + out.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, capacity: Optional[int] = None) -> TcamTable:
        if len(data) < 16:
            raise TcamError("truncated table header")
        w, n = struct.unpack_from("<QQ", data, 0)
        nb = (w + 7) // 8
        rec = 8 + 2 * nb + 8
        if len(data) != 16 + n * rec:
            raise TcamError("table dump has trailing or missing bytes")
        body = np.frombuffer(data, np.uint8, count=n * rec, offset=16).reshape(n, rec)
        widths = body[:, :8].copy().view("<u8").reshape(n)
        if n and np.any(widths != w):
            raise TcamError("entry width disagrees with table header")
        nc = n_chunks(w)

        def plane(cols: np.ndarray) -> np.ndarray:
            buf = np.zeros((n, nc * 8), np.uint8)
            buf[:, :nb] = cols
            return buf.view("<u8").astype(np.uint64).reshape(n, nc)

        care = plane(body[:, 8 : 8 + nb])
        value = plane(body[:, 8 + nb : 8 + 2 * nb])
        payloads = body[:, 8 + 2 * nb :].copy().view("<i8").reshape(n).astype(np.int64)
        table = cls(int(w), capacity=capacity)
        if n:
            table.program_planes(value, care, payloads)
        return table

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> TcamTable:
        return cls.from_bytes(Path(path).read_bytes())

    def to_text(self) -> str:
        """Debug dump: ``<ternary string> <payload>`` per line, in address order."""
        self._consolidate()
        lines = []
        for a in range(self._count):
            word, payload = self.entry(a)
            lines.append(f"{encode_text(word)} {payload}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> TcamTable:
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows:
            raise TcamError("empty text dump; width unknown")
        words = [decode_text(r[0]) for r in rows]
        table = cls(words[0].width)
        for word, r in zip(words, rows):
            table.program(word, int(r[1]))
        return table
