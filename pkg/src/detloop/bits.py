"""Fixed-length bit strings and the XOR/Hamming arithmetic on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, order=True)
class BitString:
    """A d-bit string stored as a Python int.

    Bit ``k`` of ``value`` is the k-th position of the string (k = 0 first).
    Python ints have no width limit, so d in the thousands is fine.
    """

    length: int
    value: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"length must be positive, got {self.length}")
        if self.value < 0 or self.value >> self.length:
            raise ValueError(f"value {self.value} does not fit in {self.length} bits")

    @classmethod
    def from_str(cls, text: str) -> BitString:
        """Parse ``"0101"``; the leftmost character is position 0."""
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a bit string: {text!r}")
        return cls(len(text), sum(1 << k for k, ch in enumerate(text) if ch == "1"))

    @classmethod
    def from_bits(cls, bits) -> BitString:
        bits = [int(b) for b in bits]
        return cls(len(bits), sum(1 << k for k, b in enumerate(bits) if b))

    @classmethod
    def zeros(cls, length: int) -> BitString:
        return cls(length, 0)

    def __str__(self):
        return "".join("1" if self.value >> k & 1 else "0" for k in range(self.length))

    def __getitem__(self, k: int) -> int:
        if not 0 <= k < self.length:
            raise IndexError(k)
        return self.value >> k & 1

    def __xor__(self, other: BitString) -> BitString:
        _check_same_length(self, other)
        return BitString(self.length, self.value ^ other.value)

    def weight(self) -> int:
        return self.value.bit_count()

    def complement(self) -> BitString:
        return BitString(self.length, self.value ^ ((1 << self.length) - 1))

    def to_array(self) -> np.ndarray:
        """Bits as a uint8 array of length d."""
        return np.array([self.value >> k & 1 for k in range(self.length)], dtype=np.uint8)


def _check_same_length(x: BitString, y: BitString):
    if x.length != y.length:
        raise ValueError(f"length mismatch: {x.length} vs {y.length}")


def hamming(x: BitString, y: BitString) -> int:
    """Number of positions where ``x`` and ``y`` differ."""
    _check_same_length(x, y)
    return (x.value ^ y.value).bit_count()


def parity(v: int) -> int:
    return v.bit_count() & 1


def all_bitstrings(d: int):
    """Every element of {0,1}^d in increasing integer order."""
    return [BitString(d, v) for v in range(1 << d)]


def fwht(values) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform.

    ``out[c] = sum_k values[k] * (-1)**parity(c & k)``; length must be a power of two.
    """
    a = np.array(values, dtype=float)
    n = a.shape[0]
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    h = 1
    while h < n:
        a = a.reshape(-1, 2, h)
        a = np.stack((a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]), axis=1)
        h *= 2
    return a.reshape(n)
