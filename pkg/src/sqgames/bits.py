"""Immutable bit-vectors.

One primitive serves every place the framework needs bits: universe elements,
per-item masks, expander seeds, expander output streams, and the XOR algebra
of the encode/decode pipelines.  Bits are stored packed, most-significant bit
first; the numeric value of a vector is its big-endian reading.  Padding bits
in the last byte are always zero, so equality and hashing work on the raw
buffer.
"""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

__all__ = ["Bits"]


class Bits:
    """An immutable, hashable bit-vector (MSB first)."""

    __slots__ = ("_buf", "_len")

    def __init__(self, buf: bytes, length: int):
        nbytes = (length + 7) // 8
        if len(buf) != nbytes:
            raise ValueError(f"buffer holds {len(buf)} bytes, need {nbytes} for {length} bits")
        if length % 8 and nbytes:
            pad_mask = (1 << (8 - length % 8)) - 1
            if buf[-1] & pad_mask:
                raise ValueError("padding bits must be zero")
        self._buf = bytes(buf)
        self._len = length

    # -- constructors ------------------------------------------------------

    @classmethod
    def zeros(cls, length: int) -> "Bits":
        return cls(bytes((length + 7) // 8), length)

    @classmethod
    def from_ints(cls, values: Iterable[int]) -> "Bits":
        vals = list(values)
        for v in vals:
            if v not in (0, 1):
                raise ValueError(f"bit values must be 0 or 1, got {v}")
        length = len(vals)
        buf = bytearray((length + 7) // 8)
        for j, v in enumerate(vals):
            if v:
                buf[j >> 3] |= 0x80 >> (j & 7)
        return cls(bytes(buf), length)

    @classmethod
    def from_int(cls, value: int, width: int) -> "Bits":
        """The big-endian ``width``-bit representation of ``value``."""
        if value < 0 or value >> width:
            raise ValueError(f"{value} does not fit in {width} bits")
        nbytes = (width + 7) // 8
        shifted = value << (8 * nbytes - width)
        return cls(shifted.to_bytes(nbytes, "big"), width)

    @classmethod
    def from_string(cls, s: str) -> "Bits":
        return cls.from_ints(int(c) for c in s)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "Bits":
        nbytes = (length + 7) // 8
        buf = bytearray(rng.bytes(nbytes)) if nbytes else bytearray()
        if length % 8 and nbytes:
            buf[-1] &= 0xFF << (8 - length % 8) & 0xFF
        return cls(bytes(buf), length)

    @classmethod
    def concat(cls, pieces: Iterable["Bits"]) -> "Bits":
        total = 0
        value = 0
        for p in pieces:
            value = (value << len(p)) | int(p)
            total += len(p)
        return cls.from_int(value, total)

    # -- accessors ---------------------------------------------------------

    def bit(self, j: int) -> int:
        """The j-th bit (0-indexed from the most significant end)."""
        if not 0 <= j < self._len:
            raise IndexError(f"bit {j} out of range for {self._len}-bit vector")
        return (self._buf[j >> 3] >> (7 - (j & 7))) & 1

    def split(self, width: int) -> list["Bits"]:
        """Chop into consecutive ``width``-bit pieces (length must divide evenly)."""
        if self._len % width:
            raise ValueError(f"cannot split {self._len} bits into {width}-bit pieces")
        v = int(self)
        count = self._len // width
        mask = (1 << width) - 1
        return [
            Bits.from_int((v >> (width * (count - 1 - t))) & mask, width)
            for t in range(count)
        ]

    def to_array(self) -> np.ndarray:
        arr = np.frombuffer(self._buf, dtype=np.uint8)
        return np.unpackbits(arr)[: self._len]

    def to01(self) -> str:
        return "".join(str(b) for b in self)

    @property
    def packed(self) -> bytes:
        return self._buf

    # -- dunder ------------------------------------------------------------

    def __len__(self) -> int:
        return self._len

    def __iter__(self) -> Iterator[int]:
        return (self.bit(j) for j in range(self._len))

    def __int__(self) -> int:
        if not self._buf:
            return 0
        return int.from_bytes(self._buf, "big") >> (8 * len(self._buf) - self._len)

    def __xor__(self, other: "Bits") -> "Bits":
        if not isinstance(other, Bits):
            return NotImplemented
        if self._len != other._len:
            raise ValueError(f"length mismatch: {self._len} vs {other._len}")
        return Bits(bytes(a ^ b for a, b in zip(self._buf, other._buf)), self._len)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Bits)
            and self._len == other._len
            and self._buf == other._buf
        )

    def __hash__(self) -> int:
        return hash((self._len, self._buf))

    def __repr__(self) -> str:
        shown = self.to01() if self._len <= 64 else self.to01()[:61] + "..."
        return f"Bits({shown!r})"
