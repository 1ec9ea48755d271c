"""
Byte-oriented 32-bit range coder with carry propagation and an order-0 adaptive model.

The encoder keeps a 33-bit `low`; a carry out of bit 32 is pushed into the cached
byte and any pending 0xFF run. The decoder mirrors the encoder's normalization and
reads exactly the bytes the encoder wrote.
"""
import numpy as np

from src.errors import StreamFormatError

TOP = 1 << 24
MASK32 = 0xFFFFFFFF

ALPHABET = 256
INCREMENT = 32
RESCALE_LIMIT = 1 << 16


class FrequencyModel:
    """Adaptive order-0 frequencies: Laplace start, fixed increment, halving rescale"""

    def __init__(self, alphabet=ALPHABET, increment=INCREMENT, limit=RESCALE_LIMIT):
        self.freq = np.ones(alphabet, dtype=np.int64)
        self.increment = increment
        self.limit = limit
        self.total = alphabet

    def interval(self, symbol):
        """(cumulative frequency below symbol, symbol frequency, total)"""
        return int(self.freq[:symbol].sum()), int(self.freq[symbol]), self.total

    def find(self, value):
        """Symbol whose cumulative interval contains value"""
        upper = np.cumsum(self.freq)
        symbol = int(np.searchsorted(upper, value, side='right'))
        return symbol, int(upper[symbol] - self.freq[symbol]), int(self.freq[symbol])

    def update(self, symbol):
        self.freq[symbol] += self.increment
        self.total += self.increment
        if self.total > self.limit:
            self.freq = (self.freq + 1) // 2
            self.total = int(self.freq.sum())


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()

    def encode(self, cum, freq, total):
        r = self.range // total
        self.low += r * cum
        self.range = r * freq
        while self.range < TOP:
            self.range <<= 8
            self._shift_low()

    def _shift_low(self):
        if (self.low & MASK32) < 0xFF000000 or self.low > MASK32:
            carry = self.low >> 32
            byte = self.cache
            while self.cache_size:
                self.out.append((byte + carry) & 0xFF)
                byte = 0xFF
                self.cache_size -= 1
            self.cache = (self.low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def finish(self):
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data):
        self.data = bytes(data)
        self.pos = 0
        self.range = MASK32
        self.code = 0
        for _ in range(5):
            self.code = ((self.code << 8) | self._next_byte()) & MASK32
        self._step = 0

    def _next_byte(self):
        if self.pos >= len(self.data):
            raise StreamFormatError(f"range-coded payload truncated at byte {self.pos}")
        byte = self.data[self.pos]
        self.pos += 1
        return byte

    def target(self, total):
        self._step = self.range // total
        value = self.code // self._step
        if value >= total:
            raise StreamFormatError(f"range decoder desynchronized near byte {self.pos}")
        return value

    def consume(self, cum, freq):
        self.code -= self._step * cum
        self.range = self._step * freq
        while self.range < TOP:
            self.range <<= 8
            self.code = ((self.code << 8) | self._next_byte()) & MASK32

    @property
    def exhausted(self):
        return self.pos == len(self.data)


def encode_bytes(symbols):
    """Range-code a byte string with a fresh adaptive model"""
    model = FrequencyModel()
    encoder = RangeEncoder()
    for symbol in symbols:
        encoder.encode(*model.interval(symbol))
        model.update(symbol)
    return encoder.finish()


class SymbolReader:
    """Incremental decoding of a range-coded byte string"""

    def __init__(self, data):
        self.model = FrequencyModel()
        self.decoder = RangeDecoder(data)

    def read(self, count):
        out = np.empty(count, dtype=np.uint8)
        for i in range(count):
            symbol, cum, freq = self.model.find(self.decoder.target(self.model.total))
            self.decoder.consume(cum, freq)
            self.model.update(symbol)
            out[i] = symbol
        return out

    @property
    def exhausted(self):
        return self.decoder.exhausted
