"""Integer arithmetic coder with adaptive frequency models.

Classic 32-bit low/high formulation: the interval shrinks by cumulative
symbol frequencies, renormalizes by emitting settled top bits, and
counts middle-straddling states as pending underflow bits.  Coded
segments are written standalone and spliced into the stream behind a
bit-length prefix; the decoder side reads from a zero-padded sub-reader
because the final symbols resolve from bits past the written end.
"""

from __future__ import annotations

from .bits import BitReader, BitWriter

STATE_BITS = 32
FULL = 1 << STATE_BITS
HALF = FULL >> 1
QUARTER = FULL >> 2
MASK = FULL - 1

# Totals must stay far below QUARTER so every symbol keeps a non-empty
# interval after the integer division.
MAX_TOTAL = QUARTER


class AdaptiveModel:
    """Symbol frequency table; counts start at 1 and grow when adapt=True."""

    def __init__(self, num_symbols: int, counts=None, adapt: bool = True):
        if counts is None:
            counts = [1] * num_symbols
        if len(counts) != num_symbols or any(c < 1 for c in counts):
            raise ValueError("counts must be positive and match num_symbols")
        self.counts = list(counts)
        self.total = sum(self.counts)
        self.adapt = adapt
        if self.total >= MAX_TOTAL:
            raise ValueError("initial counts too large")

    def interval(self, symbol: int) -> tuple[int, int, int]:
        """(cum_lo, cum_hi, total) for a symbol."""
        lo = sum(self.counts[:symbol])
        return lo, lo + self.counts[symbol], self.total

    def find(self, cum: int) -> int:
        """Symbol whose cumulative interval contains cum."""
        acc = 0
        for s, c in enumerate(self.counts):
            acc += c
            if cum < acc:
                return s
        return len(self.counts) - 1

    def update(self, symbol: int) -> None:
        if self.adapt and self.total < MAX_TOTAL:
            self.counts[symbol] += 1
            self.total += 1


class ArithEncoder:
    """Writes symbols into an internal BitWriter; call finish() then splice."""

    def __init__(self):
        self._low = 0
        self._high = MASK
        self._pending = 0
        self.writer = BitWriter()

    def _emit(self, bit: int) -> None:
        w = self.writer
        w.write_bit(bit)
        inv = bit ^ 1
        while self._pending:
            w.write_bit(inv)
            self._pending -= 1

    def encode(self, cum_lo: int, cum_hi: int, total: int) -> None:
        span = self._high - self._low + 1
        self._high = self._low + (span * cum_hi) // total - 1
        self._low = self._low + (span * cum_lo) // total
        while True:
            if self._high < HALF:
                self._emit(0)
            elif self._low >= HALF:
                self._emit(1)
                self._low -= HALF
                self._high -= HALF
            elif self._low >= QUARTER and self._high < HALF + QUARTER:
                self._pending += 1
                self._low -= QUARTER
                self._high -= QUARTER
            else:
                break
            self._low <<= 1
            self._high = (self._high << 1) | 1

    def encode_symbol(self, model: AdaptiveModel, symbol: int) -> None:
        self.encode(*model.interval(symbol))
        model.update(symbol)

    def finish(self) -> None:
        """Terminate so a zero-padded reader recovers every symbol."""
        self._pending += 1
        self._emit(1 if self._low >= QUARTER else 0)


class ArithDecoder:
    """Mirror of ArithEncoder over a (zero-padded) BitReader."""

    def __init__(self, reader: BitReader):
        self._reader = reader
        self._low = 0
        self._high = MASK
        self._code = reader.read_bits(STATE_BITS)

    def decode(self, model: AdaptiveModel) -> int:
        total = model.total
        span = self._high - self._low + 1
        cum = ((self._code - self._low + 1) * total - 1) // span
        symbol = model.find(cum)
        cum_lo, cum_hi, _ = model.interval(symbol)
        self._high = self._low + (span * cum_hi) // total - 1
        self._low = self._low + (span * cum_lo) // total
        while True:
            if self._high < HALF:
                pass
            elif self._low >= HALF:
                self._low -= HALF
                self._high -= HALF
                self._code -= HALF
            elif self._low >= QUARTER and self._high < HALF + QUARTER:
                self._low -= QUARTER
                self._high -= QUARTER
                self._code -= QUARTER
            else:
                break
            self._low <<= 1
            self._high = (self._high << 1) | 1
            self._code = (self._code << 1) | self._reader.read_bit()
        model.update(symbol)
        return symbol
