"""Self-describing, injective binary encoding for protocol values.

Every value is written as a one-byte type marker followed by a
length-prefixed payload, so two distinct values never share an encoding.
Dataclasses and enums must be registered with a stable numeric tag before
they can be encoded or decoded.
"""

from __future__ import annotations

import dataclasses
import enum
import struct
from typing import Any, Callable

_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")

_records: dict[int, type] = {}
_record_tags: dict[type, int] = {}
_record_fields: dict[type, tuple[str, ...]] = {}
_memo_types: set[type] = set()
_memo: dict[tuple, bytes] = {}
_MEMO_LIMIT = 1 << 18
_enums: dict[int, type[enum.Enum]] = {}
_enum_tags: dict[type, int] = {}


class CodecError(ValueError):
    pass


def record(tag: int, memo: bool = False) -> Callable[[type], type]:
    """Class decorator registering a dataclass under ``tag``.

    With ``memo`` encodings are cached; meant for small frozen records that
    recur constantly, such as entity ids.
    """

    def wrap(cls: type) -> type:
        if not dataclasses.is_dataclass(cls):
            raise TypeError(f"{cls.__name__} is not a dataclass")
        if tag in _records and _records[tag] is not cls:
            raise ValueError(f"record tag {tag} already used by {_records[tag].__name__}")
        _records[tag] = cls
        _record_tags[cls] = tag
        _record_fields[cls] = tuple(f.name for f in dataclasses.fields(cls) if f.compare)
        if memo:
            _memo_types.add(cls)
        return cls

    return wrap


def enum_type(tag: int) -> Callable[[type], type]:
    def wrap(cls: type) -> type:
        if tag in _enums and _enums[tag] is not cls:
            raise ValueError(f"enum tag {tag} already used")
        _enums[tag] = cls
        _enum_tags[cls] = tag
        return cls

    return wrap


def encode(value: Any) -> bytes:
    out = bytearray()
    _enc(value, out)
    return bytes(out)


def _enc_record(value: Any, names: tuple[str, ...], out: bytearray) -> None:
    out += b"R" + _U16.pack(_record_tags[type(value)]) + _U16.pack(len(names))
    for name in names:
        _enc(getattr(value, name), out)


def _enc(value: Any, out: bytearray) -> None:
    cls = type(value)
    names = _record_fields.get(cls)
    if names is not None and cls in _memo_types:
        # key on exact field types so equal-but-distinct values (1 vs True) never collide
        key = (cls,) + tuple((type(v), v) for v in (getattr(value, n) for n in names))
        try:
            cached = _memo.get(key)
        except TypeError:  # unhashable field value
            _enc_record(value, names, out)
            return
        if cached is None:
            buf = bytearray()
            _enc_record(value, names, buf)
            cached = bytes(buf)
            if len(_memo) < _MEMO_LIMIT:
                _memo[key] = cached
        out += cached
    elif names is not None:
        _enc_record(value, names, out)
    elif value is None:
        out += b"N"
    elif isinstance(value, enum.Enum):
        tag = _enum_tags.get(type(value))
        if tag is None:
            raise CodecError(f"unregistered enum {type(value).__name__}")
        out += b"E" + _U16.pack(tag)
        _enc(value.value, out)
    elif isinstance(value, bool):
        out += b"T" if value else b"F"
    elif isinstance(value, int):
        out += b"I" + _I64.pack(value)
    elif isinstance(value, (bytes, bytearray)):
        out += b"B" + _U32.pack(len(value)) + value
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += b"S" + _U32.pack(len(raw)) + raw
    elif isinstance(value, (tuple, list)):
        out += b"L" + _U32.pack(len(value))
        for item in value:
            _enc(item, out)
    elif isinstance(value, (set, frozenset)):
        items = sorted(encode(item) for item in value)
        out += b"Z" + _U32.pack(len(items))
        for item in items:
            out += item
    elif dataclasses.is_dataclass(value):
        raise CodecError(f"unregistered record {type(value).__name__}")
    else:
        raise CodecError(f"cannot encode {type(value).__name__}")


def decode(data: bytes) -> Any:
    value, pos = _dec(memoryview(data), 0)
    if pos != len(data):
        raise CodecError(f"trailing bytes at offset {pos}")
    return value


def _take(buf: memoryview, pos: int, n: int) -> tuple[bytes, int]:
    if pos + n > len(buf):
        raise CodecError("truncated input")
    return bytes(buf[pos:pos + n]), pos + n


def _dec(buf: memoryview, pos: int) -> tuple[Any, int]:
    marker, pos = _take(buf, pos, 1)
    if marker == b"N":
        return None, pos
    if marker == b"T":
        return True, pos
    if marker == b"F":
        return False, pos
    if marker == b"I":
        raw, pos = _take(buf, pos, 8)
        return _I64.unpack(raw)[0], pos
    if marker in (b"B", b"S"):
        raw, pos = _take(buf, pos, 4)
        data, pos = _take(buf, pos, _U32.unpack(raw)[0])
        if marker == b"B":
            return data, pos
        try:
            return data.decode("utf-8"), pos
        except UnicodeDecodeError as exc:
            raise CodecError("invalid utf-8") from exc
    if marker in (b"L", b"Z"):
        raw, pos = _take(buf, pos, 4)
        items = []
        for _ in range(_U32.unpack(raw)[0]):
            item, pos = _dec(buf, pos)
            items.append(item)
        return (tuple(items) if marker == b"L" else frozenset(items)), pos
    if marker == b"E":
        raw, pos = _take(buf, pos, 2)
        cls = _enums.get(_U16.unpack(raw)[0])
        if cls is None:
            raise CodecError("unknown enum tag")
        value, pos = _dec(buf, pos)
        try:
            return cls(value), pos
        except ValueError as exc:
            raise CodecError(str(exc)) from exc
    if marker == b"R":
        raw, pos = _take(buf, pos, 2)
        cls = _records.get(_U16.unpack(raw)[0])
        if cls is None:
            raise CodecError("unknown record tag")
        raw, pos = _take(buf, pos, 2)
        values = []
        for _ in range(_U16.unpack(raw)[0]):
            value, pos = _dec(buf, pos)
            values.append(value)
        try:
            return cls(*values), pos
        except (TypeError, ValueError) as exc:
            raise CodecError(f"bad {cls.__name__} record: {exc}") from exc
    raise CodecError(f"unknown marker {marker!r}")
