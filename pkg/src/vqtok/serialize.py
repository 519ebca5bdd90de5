"""Low-level helpers for the on-disk and CLI wire formats.

Everything here is byte-exact and reversible: varints, the TSV escaping used
by frequency lists, and the printable rendering of symbol sequences used by
the CLI token stream and merge-table files.
"""

from __future__ import annotations

import struct
from typing import Iterable

BOW = 256  # beginning-of-word marker symbol
EOW = 257  # end-of-word marker symbol
PAD = 258  # history padding; doubles as the terminator for unmarked subwords
NUM_SYMBOLS = 259


# -----------------------------
# varints (LEB128, unsigned)
# -----------------------------

def write_varint(out: bytearray, value: int) -> None:
    if value < 0:
        raise ValueError("varints are unsigned")
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise ValueError("truncated varint")
        b = data[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7


def pack_f64(values) -> bytes:
    import numpy as np

    return np.asarray(values, dtype="<f8").tobytes()


def unpack_header(data: bytes, pos: int, fmt: str) -> tuple[tuple, int]:
    size = struct.calcsize(fmt)
    if pos + size > len(data):
        raise ValueError("truncated header")
    return struct.unpack_from(fmt, data, pos), pos + size


# -----------------------------
# TSV escaping for word bytes
# -----------------------------
# Words never contain whitespace bytes, but the format stays safe for any
# byte string: backslash itself must be escaped for the mapping to invert.

def escape_tsv_bytes(word: bytes) -> bytes:
    return word.replace(b"\\", b"\\\\").replace(b"\t", b"\\t").replace(b"\n", b"\\n")


def unescape_tsv_bytes(data: bytes) -> bytes:
    out = bytearray()
    i = 0
    n = len(data)
    while i < n:
        b = data[i]
        if b == 0x5C:  # backslash
            if i + 1 >= n:
                raise ValueError("dangling escape at end of field")
            nxt = data[i + 1]
            if nxt == 0x5C:
                out.append(0x5C)
            elif nxt == 0x74:  # t
                out.append(0x09)
            elif nxt == 0x6E:  # n
                out.append(0x0A)
            else:
                raise ValueError(f"unknown escape \\{chr(nxt)!r}")
            i += 2
        else:
            out.append(b)
            i += 1
    return bytes(out)


# -----------------------------
# printable symbol rendering
# -----------------------------
# Used by the CLI piece stream (`subword:r,g,b`) and merge-table files.
# The rendering is always valid UTF-8 and byte-reversible: printable ASCII
# and complete multi-byte UTF-8 sequences pass through verbatim, markers and
# everything ambiguous in a whitespace/colon-delimited line are escaped, and
# stray non-UTF-8 bytes become \xNN escapes.

_ESCAPED_BYTES = {0x5C: b"\\\\", 0x3A: b"\\:", 0x20: b"\\_"}

_UTF8_LEAD_LENGTH = [(0xE0, 0xC0, 2), (0xF0, 0xE0, 3), (0xF8, 0xF0, 4)]


def _utf8_run_length(symbols, start: int) -> int:
    """Length of a complete valid multi-byte UTF-8 sequence at start, or 0."""
    lead = symbols[start]
    for mask, value, length in _UTF8_LEAD_LENGTH:
        if lead & mask == value:
            candidate = symbols[start : start + length]
            if len(candidate) < length or any(not 0x80 <= s <= 0xBF for s in candidate[1:]):
                return 0
            try:
                bytes(candidate).decode("utf-8")  # rejects overlong/surrogate forms
            except UnicodeDecodeError:
                return 0
            return length
    return 0


def render_symbols(symbols: Iterable[int]) -> str:
    syms = list(symbols)
    out = bytearray()
    i = 0
    while i < len(syms):
        sym = syms[i]
        if sym == BOW:
            out += b"\\<"
        elif sym == EOW:
            out += b"\\>"
        elif sym > 0xFF:
            raise ValueError(f"not a renderable symbol: {sym}")
        elif sym in _ESCAPED_BYTES:
            out += _ESCAPED_BYTES[sym]
        elif 0x21 <= sym <= 0x7E:
            out.append(sym)
        elif sym >= 0x80:
            length = _utf8_run_length(syms, i)
            if length:
                out += bytes(syms[i : i + length])
                i += length
                continue
            out += b"\\x%02x" % sym
        else:
            out += b"\\x%02x" % sym
        i += 1
    return out.decode("utf-8")


def parse_symbols(text: str) -> tuple[int, ...]:
    data = text.encode("utf-8", errors="surrogateescape")
    symbols: list[int] = []
    i = 0
    n = len(data)
    while i < n:
        b = data[i]
        if b != 0x5C:
            symbols.append(b)
            i += 1
            continue
        if i + 1 >= n:
            raise ValueError("dangling escape in symbol string")
        nxt = data[i + 1]
        if nxt == 0x3C:  # <
            symbols.append(BOW)
            i += 2
        elif nxt == 0x3E:  # >
            symbols.append(EOW)
            i += 2
        elif nxt == 0x5C:
            symbols.append(0x5C)
            i += 2
        elif nxt == 0x3A:
            symbols.append(0x3A)
            i += 2
        elif nxt == 0x5F:  # _
            symbols.append(0x20)
            i += 2
        elif nxt == 0x78:  # x
            if i + 3 >= n:
                raise ValueError("truncated \\x escape")
            symbols.append(int(data[i + 2 : i + 4].decode("ascii"), 16))
            i += 4
        else:
            raise ValueError(f"unknown escape \\{chr(nxt)!r}")
    return tuple(symbols)
