"""Tagged binary encoding for journal payloads and snapshots.

Every value is prefixed with a one-byte type tag, so a reader needs no
schema to walk a payload. Maps are written with keys in sorted order, which
makes the encoding canonical: equal values always produce equal bytes.

    N          None
    T / F      True / False
    I <q>      signed 64-bit int
    D <d>      float64
    S <u32> .. utf-8 text
    B <u32> .. raw bytes
    L <u32> *  list (tuples encode as lists)
    M <u32> *  map of text key -> value
"""

from __future__ import annotations

import struct
from typing import Any

FORMAT_VERSION = 1

_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")


class CodecError(ValueError):
    pass


def encode(value: Any) -> bytes:
    out = bytearray()
    _encode(value, out)
    return bytes(out)


def _encode(value: Any, out: bytearray) -> None:
    if value is None:
        out += b"N"
    elif value is True:
        out += b"T"
    elif value is False:
        out += b"F"
    elif isinstance(value, int):
        try:
            out += b"I" + _I64.pack(value)
        except struct.error as exc:
            raise CodecError(f"integer out of range: {value}") from exc
    elif isinstance(value, float):
        out += b"D" + _F64.pack(value)
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += b"S" + _U32.pack(len(raw)) + raw
    elif isinstance(value, (bytes, bytearray)):
        out += b"B" + _U32.pack(len(value)) + bytes(value)
    elif isinstance(value, (list, tuple)):
        out += b"L" + _U32.pack(len(value))
        for item in value:
            _encode(item, out)
    elif isinstance(value, dict):
        out += b"M" + _U32.pack(len(value))
        for key in sorted(value):
            if not isinstance(key, str):
                raise CodecError(f"map keys must be text, got {type(key).__name__}")
            raw = key.encode("utf-8")
            out += _U32.pack(len(raw)) + raw
            _encode(value[key], out)
    else:
        raise CodecError(f"cannot encode {type(value).__name__}")


def decode(data: bytes) -> Any:
    buf = bytes(data)
    try:
        value, pos = _decode(buf, 0)
    except (struct.error, IndexError):
        raise CodecError("truncated value") from None
    except UnicodeDecodeError as exc:
        raise CodecError(f"bad utf-8 text: {exc.reason}") from None
    if pos != len(buf):
        raise CodecError(f"trailing bytes after value ({len(buf) - pos})")
    return value


def _span(buf: bytes, pos: int) -> tuple[bytes, int]:
    (n,) = _U32.unpack_from(buf, pos)
    start, end = pos + 4, pos + 4 + n
    if end > len(buf):
        raise CodecError("truncated value")
    return buf[start:end], end


def _decode(buf: bytes, pos: int) -> tuple[Any, int]:
    tag = buf[pos]
    pos += 1
    if tag == 0x4E:  # N
        return None, pos
    if tag == 0x54:  # T
        return True, pos
    if tag == 0x46:  # F
        return False, pos
    if tag == 0x49:  # I
        return _I64.unpack_from(buf, pos)[0], pos + 8
    if tag == 0x44:  # D
        return _F64.unpack_from(buf, pos)[0], pos + 8
    if tag == 0x53:  # S
        raw, pos = _span(buf, pos)
        return raw.decode("utf-8"), pos
    if tag == 0x42:  # B
        return _span(buf, pos)
    if tag == 0x4C:  # L
        (count,) = _U32.unpack_from(buf, pos)
        pos += 4
        items = []
        for _ in range(count):
            item, pos = _decode(buf, pos)
            items.append(item)
        return items, pos
    if tag == 0x4D:  # M
        (count,) = _U32.unpack_from(buf, pos)
        pos += 4
        result = {}
        for _ in range(count):
            key, pos = _span(buf, pos)
            result[key.decode("utf-8")], pos = _decode(buf, pos)
        return result, pos
    raise CodecError(f"unknown tag {bytes([tag])!r} at offset {pos - 1}")
