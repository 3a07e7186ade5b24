"""MSB-first bit packing.

Frame records are packed back to back with no alignment between them;
padding to a byte boundary happens only once, at the end of a stream.
"""

from __future__ import annotations

from ..errors import CorruptStream


class BitWriter:
    """Accumulates bits most-significant first."""

    def __init__(self):
        self._out = bytearray()
        self._acc = 0
        self._nbits = 0

    @property
    def bit_count(self) -> int:
        return 8 * len(self._out) + self._nbits

    def write_bit(self, bit: int) -> None:
        self._acc = (self._acc << 1) | (bit & 1)
        self._nbits += 1
        if self._nbits == 8:
            self._out.append(self._acc)
            self._acc = 0
            self._nbits = 0

    def write_bits(self, value: int, count: int) -> None:
        """Write the low `count` bits of value, MSB first."""
        if value < 0 or (count < 64 and value >= (1 << count)):
            raise ValueError(f"value {value} does not fit in {count} bits")
        for shift in range(count - 1, -1, -1):
            self.write_bit((value >> shift) & 1)

    def extend(self, other: "BitWriter") -> None:
        """Append another writer's bits (used to splice coded segments)."""
        for byte in other._out:
            for shift in range(7, -1, -1):
                self.write_bit((byte >> shift) & 1)
        for shift in range(other._nbits - 1, -1, -1):
            self.write_bit((other._acc >> shift) & 1)

    def to_bytes(self) -> bytes:
        """Final byte string, zero-padded to a byte boundary."""
        out = bytearray(self._out)
        if self._nbits:
            out.append(self._acc << (8 - self._nbits))
        return bytes(out)


class BitReader:
    """Reads bits MSB-first from a byte string.

    A reader covers the bit range [start, start + length).  Reading past
    the end raises CorruptStream unless the reader was built with
    pad=True, in which case it yields zero bits; coded segments rely on
    that padding because an arithmetic decoder looks a few bits ahead of
    the last coded symbol.
    """

    def __init__(self, data: bytes, start: int = 0, length: int | None = None, pad: bool = False):
        self._data = data
        self._pos = start
        total = 8 * len(data)
        if length is None:
            self._end = total
        else:
            self._end = start + length
            if not pad and self._end > total:
                raise CorruptStream("segment extends past the stream", bit_offset=start)
        self._pad = pad

    @property
    def position(self) -> int:
        """Absolute bit offset of the next read."""
        return self._pos

    @property
    def remaining(self) -> int:
        return max(self._end - self._pos, 0)

    def read_bit(self) -> int:
        if self._pos >= self._end:
            if self._pad:
                self._pos += 1
                return 0
            raise CorruptStream("read past end of stream", bit_offset=self._pos)
        if self._pos >= 8 * len(self._data):
            # Inside the declared segment but past the data; only reachable
            # with pad=True (the constructor rejects it otherwise).
            self._pos += 1
            return 0
        byte = self._data[self._pos >> 3]
        bit = (byte >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    def read_bits(self, count: int) -> int:
        value = 0
        for _ in range(count):
            value = (value << 1) | self.read_bit()
        return value

    def skip(self, count: int) -> None:
        if self._pos + count > self._end and not self._pad:
            raise CorruptStream("skip past end of stream", bit_offset=self._pos)
        self._pos += count

    def sub_reader(self, length: int, pad: bool = True) -> "BitReader":
        """Reader over the next `length` bits; advances this reader past them."""
        sub = BitReader(self._data, start=self._pos, length=length, pad=pad)
        self.skip(length)
        return sub
