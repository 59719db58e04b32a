"""Loading the three cyber-side sensor streams and per-packet TCP annotations."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import NonMonotoneTimestamp, ParseError
from .features import BASE_COLUMNS, COLUMNS, hex8

ALERT_TYPES = ("DNP3", "ARP_SPOOF", "ICMP_FLOOD", "OTHER")


@dataclass(frozen=True)
class RawPacket:
    ts_us: int
    frame_len: int | None = None
    frame_protocols: str | None = None
    eth_src: str | None = None
    eth_dst: str | None = None
    ip_src: str | None = None
    ip_dst: str | None = None
    ip_len: int | None = None
    ip_flags: int | None = None
    src_port: int | None = None
    dst_port: int | None = None
    tcp_len: int | None = None
    tcp_flags: int | None = None
    tcp_seq: int | None = None
    tcp_ack: int | None = None
    dnp3_bytes: bytes | None = None

    def to_json(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if f.name == "dnp3_bytes":
                d["dnp3_hex"] = v.hex()
            else:
                d[f.name] = v
        return d


@dataclass(frozen=True)
class FlowEvent:
    event_start_us: int
    event_end_us: int
    flow_id: str
    flow_final: bool
    source_packets: int
    flow_duration_us: int


@dataclass(frozen=True)
class AlertEvent:
    ts_us: int
    alert_type: str
    signature_id: int


_PACKET_FIELDS = {f.name for f in fields(RawPacket)} - {"dnp3_bytes"}
_INT_FIELDS = _PACKET_FIELDS - {"frame_protocols", "eth_src", "eth_dst", "ip_src", "ip_dst"}


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, str(exc)) from None
            if not isinstance(obj, dict):
                raise ParseError(lineno, "expected a JSON object")
            yield lineno, obj


def _packet_from_json(lineno, obj) -> RawPacket:
    if "ts_us" not in obj:
        raise ParseError(lineno, "missing ts_us")
    kw = {}
    for key, value in obj.items():
        if key == "dnp3_hex":
            if value is not None:
                try:
                    kw["dnp3_bytes"] = bytes.fromhex(value)
                except (TypeError, ValueError):
                    raise ParseError(lineno, "bad dnp3_hex") from None
        elif key in _PACKET_FIELDS:
            if value is not None and key in _INT_FIELDS and not isinstance(value, int):
                raise ParseError(lineno, f"{key} must be an integer")
            kw[key] = value
    for port in ("src_port", "dst_port"):
        if kw.get(port) is not None and not 0 <= kw[port] <= 65535:
            raise ParseError(lineno, f"{port} out of range")
    return RawPacket(**kw)


def load_capture(path) -> list[RawPacket]:
    pkts = [_packet_from_json(n, obj) for n, obj in _read_jsonl(path)]
    if any(b.ts_us < a.ts_us for a, b in zip(pkts, pkts[1:])):
        warnings.warn(f"{path}: timestamps not monotone, sorting", NonMonotoneTimestamp)
        pkts.sort(key=lambda p: p.ts_us)
    return pkts


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def load_flow_events(path) -> list[FlowEvent]:
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            ev = FlowEvent(int(obj["event_start_us"]), int(obj["event_end_us"]), str(obj["flow_id"]),
                           bool(obj["flow_final"]), int(obj["source_packets"]),
                           int(obj["flow_duration_us"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(lineno, f"bad flow record: {exc}") from None
        if ev.event_start_us > ev.event_end_us:
            raise ParseError(lineno, "event_start after event_end")
        out.append(ev)
    out.sort(key=lambda e: e.event_start_us)
    return out


def filter_flows(flows, start_us=None, end_us=None, max_duration_us=None, final_only=False):
    """File-side equivalent of the packetbeat range/match query."""
    out = []
    for f in flows:
        if start_us is not None and f.event_end_us < start_us:
            continue
        if end_us is not None and f.event_end_us > end_us:
            continue
        if max_duration_us is not None and not 0 <= f.flow_duration_us <= max_duration_us:
            continue
        if final_only and not f.flow_final:
            continue
        out.append(f)
    return out


def load_alert_events(path) -> list[AlertEvent]:
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            ev = AlertEvent(int(obj["ts_us"]), str(obj["alert_type"]), int(obj["signature_id"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(lineno, f"bad alert record: {exc}") from None
        if ev.alert_type not in ALERT_TYPES:
            raise ParseError(lineno, f"unknown alert_type {ev.alert_type!r}")
        out.append(ev)
    out.sort(key=lambda e: e.ts_us)
    return out


# --- cyber table ------------------------------------------------------------

def empty_record(ts_us: int) -> dict:
    rec = {"ts_us": ts_us}
    rec.update(dict.fromkeys(COLUMNS))
    return rec


def extract_cyber_base(pkt: RawPacket) -> dict:
    """Copy the twelve packet-header columns; every other column stays ``None``."""
    rec = empty_record(pkt.ts_us)
    rec.update(zip(BASE_COLUMNS, (
        pkt.frame_len,
        pkt.frame_protocols,
        pkt.eth_src,
        pkt.eth_dst,
        pkt.ip_src,
        pkt.ip_dst,
        pkt.ip_len,
        None if pkt.ip_flags is None else hex8(pkt.ip_flags),
        pkt.src_port,
        pkt.dst_port,
        pkt.tcp_len,
        None if pkt.tcp_flags is None else hex8(pkt.tcp_flags),
    )))
    return rec


def _is_tcp(p: RawPacket) -> bool:
    return None not in (p.ip_src, p.ip_dst, p.src_port, p.dst_port, p.tcp_seq)


def annotate_retransmissions(pkts) -> list[int]:
    seen = set()
    flags = []
    for p in pkts:
        if not _is_tcp(p) or not p.tcp_len:
            flags.append(0)
            continue
        key = (p.ip_src, p.ip_dst, p.src_port, p.dst_port, p.tcp_seq)
        flags.append(1 if key in seen else 0)
        seen.add(key)
    return flags


def annotate_rtt(pkts) -> list[float | None]:
    """First-ACK round trip time in milliseconds for each data segment."""
    rtt: list[float | None] = [None] * len(pkts)
    pending: dict[tuple, list[tuple[int, int]]] = {}
    for i, p in enumerate(pkts):
        if not _is_tcp(p):
            continue
        if p.tcp_ack is not None:
            reverse = (p.ip_dst, p.ip_src, p.dst_port, p.src_port)
            waiting = pending.get(reverse)
            if waiting:
                still = []
                for j, end in waiting:
                    if p.tcp_ack >= end:
                        rtt[j] = (p.ts_us - pkts[j].ts_us) / 1000.0
                    else:
                        still.append((j, end))
                pending[reverse] = still
        if p.tcp_len:
            key = (p.ip_src, p.ip_dst, p.src_port, p.dst_port)
            pending.setdefault(key, []).append((i, p.tcp_seq + p.tcp_len))
    return rtt


def build_cyber_table(pkts) -> list[dict]:
    """Header columns plus retransmission and RTT annotations, in capture order."""
    retrans = annotate_retransmissions(pkts)
    rtts = annotate_rtt(pkts)
    table = []
    for p, r, t in zip(pkts, retrans, rtts):
        rec = extract_cyber_base(p)
        if _is_tcp(p):
            rec["Retrans."] = r
        rec["RTT"] = t
        table.append(rec)
    return table
