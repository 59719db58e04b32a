"""DNP3 link / transport / application dissection and serialization.

Only the object variations produced by :mod:`scadafusion.scenario` are
understood; anything else raises :class:`MalformedObjectHeader`.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import (BadStartBytes, CrcMismatch, MalformedObjectHeader,
                     Truncated, UnknownFunctionCode)

START = b"\x05\x64"
BLOCK = 16

READ = 1
WRITE = 2
SELECT = 3
OPERATE = 4
DIRECT_OPERATE = 5
ENABLE_UNSOLICITED = 20
DISABLE_UNSOLICITED = 21
RESPONSE = 129
UNSOLICITED_RESPONSE = 130
KNOWN_FUNCTION_CODES = frozenset({0, READ, WRITE, SELECT, OPERATE, DIRECT_OPERATE,
                                  ENABLE_UNSOLICITED, DISABLE_UNSOLICITED,
                                  RESPONSE, UNSOLICITED_RESPONSE})

# link control: DIR | PRM | unconfirmed user data
LINK_CTRL_MASTER = 0xC4
LINK_CTRL_OUTSTATION = 0x44


def _make_table():
    # reflected form of 0x3D65
    poly = 0xA6BC
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _make_table()


def crc16_dnp(data: bytes) -> int:
    crc = 0
    for b in data:
        crc = (crc >> 8) ^ _CRC_TABLE[(crc ^ b) & 0xFF]
    return ~crc & 0xFFFF


def _crc_bytes(data: bytes) -> bytes:
    return struct.pack("<H", crc16_dnp(data))


# --- link layer -------------------------------------------------------------

@dataclass(frozen=True)
class LinkFrame:
    ll_len: int
    ll_ctrl: int
    ll_dest: int
    ll_src: int
    user_data: bytes


def build_link_frame(ctrl: int, dest: int, src: int, user_data: bytes) -> LinkFrame:
    if len(user_data) > 250:
        raise ValueError("user data exceeds 250 octets")
    return LinkFrame(5 + len(user_data), ctrl, dest, src, bytes(user_data))


def serialize_link_frame(frame: LinkFrame) -> bytes:
    header = START + struct.pack("<BBHH", frame.ll_len, frame.ll_ctrl, frame.ll_dest, frame.ll_src)
    out = bytearray(header + _crc_bytes(header))
    data = frame.user_data
    for i in range(0, len(data), BLOCK):
        chunk = data[i:i + BLOCK]
        out += chunk + _crc_bytes(chunk)
    return bytes(out)


def wire_length(ll_len: int) -> int:
    n_user = ll_len - 5
    n_blocks = -(-n_user // BLOCK)
    return 10 + n_user + 2 * n_blocks


def parse_link_frame(wire: bytes) -> LinkFrame:
    wire = bytes(wire)
    if len(wire) < 2:
        raise Truncated("frame shorter than start octets")
    if wire[:2] != START:
        raise BadStartBytes(f"expected 05 64, got {wire[:2].hex(' ')}")
    if len(wire) < 10:
        raise Truncated("incomplete link header")
    ll_len, ctrl, dest, src = struct.unpack_from("<BBHH", wire, 2)
    if crc16_dnp(wire[:8]) != struct.unpack_from("<H", wire, 8)[0]:
        raise CrcMismatch(-1)
    if not 5 <= ll_len <= 255:
        raise Truncated(f"link length {ll_len} out of range")
    need = wire_length(ll_len)
    if len(wire) < need:
        raise Truncated(f"need {need} octets, have {len(wire)}")
    user = bytearray()
    remaining = ll_len - 5
    pos = 10
    block = 0
    while remaining > 0:
        n = min(BLOCK, remaining)
        chunk = wire[pos:pos + n]
        if crc16_dnp(chunk) != struct.unpack_from("<H", wire, pos + n)[0]:
            raise CrcMismatch(block)
        user += chunk
        pos += n + 2
        remaining -= n
        block += 1
    return LinkFrame(ll_len, ctrl, dest, src, bytes(user))


# --- transport layer --------------------------------------------------------

@dataclass(frozen=True)
class TransportHeader:
    fin: int
    fir: int
    seq: int

    @property
    def octet(self) -> int:
        return (self.fin << 7) | (self.fir << 6) | (self.seq & 0x3F)


def parse_transport(octet: int) -> TransportHeader:
    return TransportHeader(fin=(octet >> 7) & 1, fir=(octet >> 6) & 1, seq=octet & 0x3F)


# --- application layer ------------------------------------------------------

GROUP_KIND = {1: "BI", 10: "BO", 12: "BO", 20: "CounterInput", 30: "AI",
              40: "AO", 41: "AO", 60: "CLASS"}

# (group, variation) -> octets per point, or None for packed bits.  0 means
# the header carries no object data (READ requests / class objects).
_POINT_SIZE = {
    (1, 0): 0, (1, 1): None, (1, 2): 1,
    (10, 0): 0, (10, 2): 1,
    (12, 1): 11,
    (20, 0): 0, (20, 1): 5, (20, 5): 4,
    (30, 0): 0, (30, 1): 5, (30, 2): 3, (30, 3): 4, (30, 4): 2,
    (40, 0): 0, (40, 1): 5, (40, 2): 3,
    (41, 1): 5, (41, 2): 3,
    (60, 1): 0, (60, 2): 0, (60, 3): 0, (60, 4): 0,
}


@dataclass
class ObjectBlock:
    group: int
    variation: int
    qualifier: int
    indices: list[int]
    values: list = field(default_factory=list)

    @property
    def kind(self) -> str:
        return GROUP_KIND[self.group]

    @property
    def count(self) -> int:
        return len(self.indices)


@dataclass
class AppFragment:
    al_ctrl: int
    function_code: int
    direction: str
    objects: list[ObjectBlock]
    iin: int = 0

    @property
    def obj_count(self) -> int:
        return sum(b.count for b in self.objects)


def _decode_point(group, variation, raw: bytes):
    if (group, variation) in ((1, 2), (10, 2)):
        return (raw[0] >> 7) & 1
    if (group, variation) == (12, 1):
        code, count, on, off, status = struct.unpack("<BBIIB", raw)
        return {"code": code, "count": count, "on": on, "off": off, "status": status}
    if (group, variation) in ((20, 1), (30, 1), (40, 1)):
        return struct.unpack("<Bi", raw)[1]
    if (group, variation) in ((30, 2), (40, 2)):
        return struct.unpack("<Bh", raw)[1]
    if (group, variation) == (20, 5):
        return struct.unpack("<I", raw)[0]
    if (group, variation) == (30, 3):
        return struct.unpack("<i", raw)[0]
    if (group, variation) == (30, 4):
        return struct.unpack("<h", raw)[0]
    if (group, variation) == (41, 1):
        return struct.unpack("<iB", raw)[0]
    if (group, variation) == (41, 2):
        return struct.unpack("<hB", raw)[0]
    raise MalformedObjectHeader(f"no decoder for g{group}v{variation}")


def _encode_point(group, variation, value) -> bytes:
    if (group, variation) in ((1, 2), (10, 2)):
        return bytes([0x01 | ((int(value) & 1) << 7)])
    if (group, variation) == (12, 1):
        v = value
        return struct.pack("<BBIIB", v["code"], v["count"], v["on"], v["off"], v["status"])
    if (group, variation) in ((20, 1), (30, 1), (40, 1)):
        return struct.pack("<Bi", 0x01, int(value))
    if (group, variation) in ((30, 2), (40, 2)):
        return struct.pack("<Bh", 0x01, int(value))
    if (group, variation) == (20, 5):
        return struct.pack("<I", int(value))
    if (group, variation) == (30, 3):
        return struct.pack("<i", int(value))
    if (group, variation) == (30, 4):
        return struct.pack("<h", int(value))
    if (group, variation) == (41, 1):
        return struct.pack("<iB", int(value), 0)
    if (group, variation) == (41, 2):
        return struct.pack("<hB", int(value), 0)
    raise MalformedObjectHeader(f"no encoder for g{group}v{variation}")


def _take(buf: bytes, pos: int, n: int) -> bytes:
    if pos + n > len(buf):
        raise MalformedObjectHeader(f"object data truncated at offset {pos}")
    return buf[pos:pos + n]


def _parse_objects(buf: bytes, pos: int, with_data: bool) -> list[ObjectBlock]:
    blocks = []
    while pos < len(buf):
        group, variation, qual = _take(buf, pos, 3)
        pos += 3
        if (group, variation) not in _POINT_SIZE:
            raise MalformedObjectHeader(f"unsupported object g{group}v{variation}")
        size = _POINT_SIZE[(group, variation)]
        prefixed = False
        if qual == 0x00:
            start, stop = _take(buf, pos, 2)
            pos += 2
            indices = list(range(start, stop + 1))
        elif qual == 0x01:
            start, stop = struct.unpack("<HH", _take(buf, pos, 4))
            pos += 4
            indices = list(range(start, stop + 1))
        elif qual == 0x06:
            indices = []
        elif qual == 0x07:
            n = _take(buf, pos, 1)[0]
            pos += 1
            indices = list(range(n))
        elif qual == 0x17:
            n = _take(buf, pos, 1)[0]
            pos += 1
            indices, prefixed = [None] * n, True
        elif qual == 0x28:
            n = struct.unpack("<H", _take(buf, pos, 2))[0]
            pos += 2
            indices, prefixed = [None] * n, True
        else:
            raise MalformedObjectHeader(f"unsupported qualifier 0x{qual:02x}")
        if qual != 0x06 and not indices and not prefixed:
            raise MalformedObjectHeader("empty range")
        if not with_data or size == 0:
            # headers without point data; index-prefixed reads still list indices
            if prefixed:
                w = 1 if qual == 0x17 else 2
                for k in range(len(indices)):
                    indices[k] = int.from_bytes(_take(buf, pos, w), "little")
                    pos += w
            blocks.append(ObjectBlock(group, variation, qual, indices, []))
            continue
        values = []
        if size is None:
            if prefixed:
                raise MalformedObjectHeader("packed bits with index prefix")
            n_octets = -(-len(indices) // 8)
            raw = _take(buf, pos, n_octets)
            pos += n_octets
            values = [(raw[i // 8] >> (i % 8)) & 1 for i in range(len(indices))]
        else:
            for k in range(len(indices)):
                if prefixed:
                    w = 1 if qual == 0x17 else 2
                    idx = int.from_bytes(_take(buf, pos, w), "little")
                    pos += w
                    indices[k] = idx
                values.append(_decode_point(group, variation, _take(buf, pos, size)))
                pos += size
        blocks.append(ObjectBlock(group, variation, qual, indices, values))
    return blocks


def parse_application(fragment: bytes, direction: str) -> AppFragment:
    """Decode an application fragment; ``direction`` is 'request' or 'response'."""
    fragment = bytes(fragment)
    if direction not in ("request", "response"):
        raise ValueError(f"bad direction {direction!r}")
    hdr = 4 if direction == "response" else 2
    if len(fragment) < hdr:
        raise MalformedObjectHeader("application header truncated")
    al_ctrl, fc = fragment[0], fragment[1]
    if fc not in KNOWN_FUNCTION_CODES:
        raise UnknownFunctionCode(fc)
    iin = struct.unpack_from("<H", fragment, 2)[0] if hdr == 4 else 0
    # requests carry data only for write / control function codes
    with_data = direction == "response" or fc in (WRITE, SELECT, OPERATE, DIRECT_OPERATE)
    objects = _parse_objects(fragment, hdr, with_data)
    return AppFragment(al_ctrl, fc, direction, objects, iin)


def serialize_application(app: AppFragment) -> bytes:
    out = bytearray([app.al_ctrl, app.function_code])
    if app.direction == "response":
        out += struct.pack("<H", app.iin)
    for b in app.objects:
        out += bytes([b.group, b.variation, b.qualifier])
        q = b.qualifier
        if q == 0x00:
            out += bytes([b.indices[0], b.indices[-1]])
        elif q == 0x01:
            out += struct.pack("<HH", b.indices[0], b.indices[-1])
        elif q == 0x07:
            out += bytes([len(b.indices)])
        elif q == 0x17:
            out += bytes([len(b.indices)])
        elif q == 0x28:
            out += struct.pack("<H", len(b.indices))
        if not b.values:
            if q in (0x17, 0x28):
                w = 1 if q == 0x17 else 2
                for idx in b.indices:
                    out += idx.to_bytes(w, "little")
            continue
        if _POINT_SIZE[(b.group, b.variation)] is None:
            packed = bytearray(-(-len(b.values) // 8))
            for i, v in enumerate(b.values):
                packed[i // 8] |= (int(v) & 1) << (i % 8)
            out += packed
            continue
        for idx, v in zip(b.indices, b.values):
            if q == 0x17:
                out += bytes([idx])
            elif q == 0x28:
                out += struct.pack("<H", idx)
            out += _encode_point(b.group, b.variation, v)
    return bytes(out)


# --- whole-frame helpers ----------------------------------------------------

@dataclass(frozen=True)
class PhysicalRecord:
    ll_src: int
    ll_dest: int
    ll_len: int
    ll_ctrl: int
    tl_ctrl: int
    function_code: int
    al_ctrl: int
    obj_count: int
    al_payload: dict  # kind -> list of point values


def frame_direction(frame: LinkFrame) -> str:
    # DIR bit set means the frame originates at the master
    return "request" if frame.ll_ctrl & 0x80 else "response"


def build_frame(src: int, dest: int, app: AppFragment, tl_seq: int) -> bytes:
    ctrl = LINK_CTRL_MASTER if app.direction == "request" else LINK_CTRL_OUTSTATION
    tl = TransportHeader(1, 1, tl_seq).octet
    user = bytes([tl]) + serialize_application(app)
    return serialize_link_frame(build_link_frame(ctrl, dest, src, user))


def payload_vectors(objects) -> dict:
    out: dict = {}
    for b in objects:
        vals = out.setdefault(b.kind, [])
        for v in b.values:
            if isinstance(v, dict):
                v = v["code"]
            vals.append(v)
    return out


def extract_physical(frame: LinkFrame) -> PhysicalRecord:
    if not frame.user_data:
        raise Truncated("frame carries no transport octet")
    tl_octet = frame.user_data[0]
    app = parse_application(frame.user_data[1:], frame_direction(frame))
    return PhysicalRecord(ll_src=frame.ll_src, ll_dest=frame.ll_dest, ll_len=frame.ll_len,
                          ll_ctrl=frame.ll_ctrl, tl_ctrl=tl_octet, function_code=app.function_code,
                          al_ctrl=app.al_ctrl, obj_count=app.obj_count,
                          al_payload=payload_vectors(app.objects))


def partial_physical(frame: LinkFrame) -> PhysicalRecord:
    """Link and transport fields only; used when the application layer fails to parse.

    Application columns are ``None`` and get their defaults at imputation.
    """
    tl = frame.user_data[0] if frame.user_data else None
    return PhysicalRecord(frame.ll_src, frame.ll_dest, frame.ll_len, frame.ll_ctrl, tl,
                          None, None, None, None)
