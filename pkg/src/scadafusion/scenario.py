"""Synthetic master/outstation DNP3-over-TCP scenarios with ARP-spoof MiTM attacks.

A scenario is ``n_masters`` masters each polling every one of ``n_outstations``
outstations.  During the attack window an intruder relays traffic of the
first ``n_targeted`` outstations (their master-facing frames carry the
attacker MAC, RTTs stretch, retransmissions rise) and tampers with DNP3
content according to the use case:

* UC1 - DIRECT OPERATE on a binary point (breaker trip)
* UC2 - DIRECT OPERATE on binary and analog output points
* UC3 - falsified analog measurements, then commands
* UC4 - falsified measurements, commands, falsified measurements again

Once a breaker is tripped, flows redistribute and analog readings of every
outstation shift until the window closes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dnp3
from .errors import ScenarioError
from .fusion import AttackWindow
from .ingest import AlertEvent, FlowEvent, RawPacket, write_jsonl

EPOCH_US = 1_579_651_200_000_000  # 2020-01-22T00:00:00Z
ATTACKER_MAC = "02:00:00:00:00:99"
DNP3_PORT = 20000
JITTER_FRACTION = 0.05
USE_CASES = ("UC1", "UC2", "UC3", "UC4")
WINDOW_KIND = {"UC1": "FCI", "UC2": "FCI", "UC3": "FDI_FCI", "UC4": "FDI_FCI"}
SIGNATURES = {"ARP_SPOOF": 112001, "DNP3": 145001, "ICMP_FLOOD": 1000384, "OTHER": 1000001}
FALSE_ALARM_TYPES = ("OTHER", "ICMP_FLOOD", "DNP3")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ScenarioSpec:
    use_case: str = "UC1"
    n_masters: int = 5
    polling_interval_s: float = 30.0
    n_outstations: int = 4
    duration_s: float = 1800.0
    attack_start_s: float | None = 600.0
    attack_end_s: float | None = 1200.0
    snort_detect_prob: float = 0.8
    snort_false_alarm_rate: float = 0.05
    mitm_delay_factor: float = 3.0
    seed: int = 0
    n_targeted: int = 1
    n_binary: int = 4
    n_analog: int = 4
    retransmit_prob: float = 0.01
    attack_retransmit_prob: float = 0.1
    base_rtt_ms: float = 20.0
    flow_period_s: float = 10.0
    n_commands: int = 3
    analog_variation: int = 1
    binary_variation: int = 2

    def __post_init__(self):
        if self.use_case not in USE_CASES:
            raise ScenarioError(f"use_case must be one of {USE_CASES}")
        if not self.duration_s > 0:
            raise ScenarioError("scenario duration must be positive")
        if not self.polling_interval_s > 0:
            raise ScenarioError("polling interval must be positive")
        if self.n_masters < 1 or self.n_outstations < 1:
            raise ScenarioError("need at least one master and one outstation")
        if not 1 <= self.n_masters <= 99 or not 1 <= self.n_outstations <= 99:
            raise ScenarioError("at most 99 masters and 99 outstations")
        if (self.attack_start_s is None) != (self.attack_end_s is None):
            raise ScenarioError("attack start and end must both be set or both be None")
        if self.attack_start_s is not None and not 0 <= self.attack_start_s < self.attack_end_s <= self.duration_s:
            raise ScenarioError("need 0 <= attack_start < attack_end <= duration")
        for name in ("snort_detect_prob", "snort_false_alarm_rate", "retransmit_prob",
                     "attack_retransmit_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ScenarioError(f"{name} must lie in [0, 1]")
        if self.mitm_delay_factor < 1:
            raise ScenarioError("mitm_delay_factor must be >= 1")
        if not 1 <= self.n_targeted <= self.n_outstations:
            raise ScenarioError("n_targeted must be between 1 and n_outstations")
        if self.analog_variation not in (1, 2) or self.binary_variation not in (1, 2):
            raise ScenarioError("analog/binary variation must be 1 or 2")
        if not 1 <= self.n_binary <= 32 or not 1 <= self.n_analog <= 32:
            raise ScenarioError("1..32 binary and analog points per outstation")

    @property
    def has_attack(self) -> bool:
        return self.attack_start_s is not None


@dataclass
class ScenarioBundle:
    directory: Path
    capture_path: Path
    flow_path: Path
    alert_path: Path
    manifest_path: Path
    windows: list[AttackWindow]
    manifest: dict = field(repr=False)


def ground_truth_windows(spec: ScenarioSpec) -> list[AttackWindow]:
    if not spec.has_attack:
        return []
    return [AttackWindow(EPOCH_US + round(spec.attack_start_s * 1e6),
                         EPOCH_US + round(spec.attack_end_s * 1e6),
                         WINDOW_KIND[spec.use_case])]


# --- topology ---------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    addr: int
    ip: str
    mac: str


def masters(spec) -> list[Node]:
    return [Node(m + 1, f"10.0.0.{m + 10}", f"02:00:00:00:01:{m + 1:02x}") for m in range(spec.n_masters)]


def outstations(spec) -> list[Node]:
    return [Node(100 + o, f"10.0.1.{o + 10}", f"02:00:00:00:02:{o + 1:02x}") for o in range(spec.n_outstations)]


def master_port(m: int, o: int) -> int:
    return 40000 + 100 * m + o


# --- attack timeline --------------------------------------------------------

@dataclass
class Timeline:
    """Attack phases in absolute microseconds (all empty without an attack)."""
    window: tuple[int, int] | None = None
    command_times: list[int] = field(default_factory=list)
    fdi: list[tuple[int, int]] = field(default_factory=list)
    mask_binary: list[tuple[int, int]] = field(default_factory=list)

    def in_window(self, t: int) -> bool:
        return self.window is not None and self.window[0] <= t <= self.window[1]

    def tripped(self, t: int) -> bool:
        return bool(self.command_times) and self.command_times[0] <= t <= self.window[1]

    def falsified(self, t: int) -> bool:
        return any(a <= t < b for a, b in self.fdi)

    def masked(self, t: int) -> bool:
        return any(a <= t < b for a, b in self.mask_binary)


def build_timeline(spec: ScenarioSpec) -> Timeline:
    if not spec.has_attack:
        return Timeline()
    a = EPOCH_US + round(spec.attack_start_s * 1e6)
    b = EPOCH_US + round(spec.attack_end_s * 1e6)
    span = b - a

    def at(frac):
        return a + int(span * frac)

    def commands(lo, hi):
        n = spec.n_commands
        return [at(lo + (hi - lo) * (k + 0.5) / n) for k in range(n)]

    tl = Timeline(window=(a, b))
    if spec.use_case in ("UC1", "UC2"):
        tl.command_times = commands(0.05, 0.35)
    elif spec.use_case == "UC3":
        tl.fdi = [(a, at(0.5))]
        tl.command_times = commands(0.5, 0.7)
    else:
        tl.fdi = [(a, at(1 / 3)), (at(0.5), b + 1)]
        tl.command_times = commands(1 / 3, 0.5)
        tl.mask_binary = [(at(0.5), b + 1)]
    return tl


# --- packet construction ----------------------------------------------------

ETH_IP_TCP = 14 + 20 + 20
TCP_PSH_ACK = 0x18
TCP_ACK = 0x10
IP_DF = 0x40


class _Conn:
    def __init__(self, m: int, o: int, master: Node, outstation: Node):
        self.m, self.o = m, o
        self.master, self.outstation = master, outstation
        self.mport = master_port(m, o)
        self.mseq = 1000 + 7919 * (m * 100 + o)
        self.oseq = 5000 + 104729 * (m * 100 + o) % 100000
        self.m_tl = 0
        self.o_tl = 0
        self.app_seq = 0
        self.busy_until = 0


class Simulator:
    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        ss = np.random.SeedSequence(spec.seed)
        s_time, s_grid, s_net, s_alert = ss.spawn(4)
        self.rng_time = np.random.default_rng(s_time)
        self.rng_grid = np.random.default_rng(s_grid)
        self.rng_net = np.random.default_rng(s_net)
        self.rng_alert = np.random.default_rng(s_alert)
        self.masters = masters(spec)
        self.outstations = outstations(spec)
        self.targeted = set(range(spec.n_targeted)) if spec.has_attack else set()
        self.timeline = build_timeline(spec)
        no, na = spec.n_outstations, spec.n_analog
        g = self.rng_grid
        self.ai_base = g.uniform(100.0, 1000.0, size=(no, na))
        sign = np.where(g.random((no, na)) < 0.5, -1.0, 1.0)
        self.redistribution = 1.0 + sign * g.uniform(0.15, 0.4, size=(no, na))
        self.fdi_factor = g.uniform(1.5, 3.0, size=(no, na))
        self.setpoint_factor = g.uniform(0.5, 0.8, size=no)
        self.packets: list[tuple[int, int, RawPacket, dict]] = []
        self._order = 0
        self.injected_retransmissions = 0
        self.setpoint_active = [False] * no

    # -- bookkeeping --

    def _emit(self, pkt: RawPacket, **meta):
        self.packets.append((pkt.ts_us, self._order, pkt, meta))
        self._order += 1

    def _rtt_us(self, attacked: bool) -> int:
        base = self.spec.base_rtt_ms * 1000.0 * math.exp(self.rng_net.normal(0.0, 0.15))
        if attacked:
            base *= self.spec.mitm_delay_factor
        return max(1, int(round(base)))

    def _relayed(self, conn: _Conn, t: int) -> bool:
        return conn.o in self.targeted and self.timeline.in_window(t)

    def _segment(self, conn, t, to_master: bool, payload: bytes, injected=False) -> RawPacket:
        src, dst = (conn.outstation, conn.master) if to_master else (conn.master, conn.outstation)
        eth_src = src.mac
        if injected or (to_master and self._relayed(conn, t)):
            eth_src = ATTACKER_MAC
        if to_master:
            seq, ack = conn.oseq, conn.mseq
            sport, dport = DNP3_PORT, conn.mport
        else:
            seq, ack = conn.mseq, conn.oseq
            sport, dport = conn.mport, DNP3_PORT
        n = len(payload)
        return RawPacket(
            ts_us=t, frame_len=ETH_IP_TCP + n,
            frame_protocols="eth:ip:tcp:dnp3" if n else "eth:ip:tcp",
            eth_src=eth_src, eth_dst=dst.mac, ip_src=src.ip, ip_dst=dst.ip,
            ip_len=40 + n, ip_flags=IP_DF, src_port=sport, dst_port=dport, tcp_len=n,
            tcp_flags=TCP_PSH_ACK if n else TCP_ACK, tcp_seq=seq, tcp_ack=ack,
            dnp3_bytes=payload or None)

    def _send_data(self, conn, t, to_master, payload, injected=False) -> int:
        """Emit one data segment (maybe retransmitted); returns the last send time."""
        attacked = self._relayed(conn, t)
        p = self.spec.attack_retransmit_prob if attacked else self.spec.retransmit_prob
        meta = {"conn": (conn.m, conn.o), "injected": injected}
        pkt = self._segment(conn, t, to_master, payload, injected)
        self._emit(pkt, **meta)
        last = t
        if self.rng_net.random() < p:
            last = t + 200_000 + 3 * self._rtt_us(attacked)
            self._emit(self._segment(conn, last, to_master, payload, injected), retransmission=True, **meta)
            self.injected_retransmissions += 1
        if to_master:
            conn.oseq += len(payload)
        else:
            conn.mseq += len(payload)
        return last

    def _exchange(self, conn: _Conn, t: int, request: dnp3.AppFragment, injected=False):
        t = max(t, conn.busy_until + 1000)
        out, ost = conn.master, conn.outstation
        req = dnp3.build_frame(out.addr, ost.addr, request, conn.m_tl)
        conn.m_tl = (conn.m_tl + 1) % 64
        sent = self._send_data(conn, t, False, req, injected)
        t_resp = sent + self._rtt_us(self._relayed(conn, t))
        response = self._respond(conn, t_resp, request)
        resp = dnp3.build_frame(ost.addr, out.addr, response, conn.o_tl)
        conn.o_tl = (conn.o_tl + 1) % 64
        sent = self._send_data(conn, t_resp, True, resp, injected)
        t_ack = sent + self._rtt_us(self._relayed(conn, t_resp))
        self._emit(self._segment(conn, t_ack, False, b""), conn=(conn.m, conn.o), injected=False)
        conn.app_seq = (conn.app_seq + 1) % 16
        conn.busy_until = t_ack

    # -- DNP3 content --

    def _ac(self, conn) -> int:
        return 0xC0 | conn.app_seq

    def read_request(self, conn) -> dnp3.AppFragment:
        s = self.spec
        objs = [dnp3.ObjectBlock(1, 0, 0x00, list(range(s.n_binary))),
                dnp3.ObjectBlock(30, 0, 0x00, list(range(s.n_analog)))]
        return dnp3.AppFragment(self._ac(conn), dnp3.READ, "request", objs)

    def measurements(self, o: int, t: int) -> tuple[list[int], list[int]]:
        s, tl = self.spec, self.timeline
        tripped = tl.tripped(t)
        bi = [1] * s.n_binary
        ai = self.ai_base[o].copy()
        if tripped:
            ai = ai * self.redistribution[o]
            if o in self.targeted:
                bi[0] = 0
                if self.setpoint_active[o]:
                    ai = ai * self.setpoint_factor[o]
        ai = ai * (1.0 + self.rng_grid.uniform(-0.02, 0.02, size=len(ai)))
        if o in self.targeted and tl.in_window(t):
            if tl.falsified(t):
                ai = ai * self.fdi_factor[o]
            if tl.masked(t):
                bi = [1] * s.n_binary
        return bi, [int(round(v)) for v in ai]

    def _respond(self, conn, t, request: dnp3.AppFragment) -> dnp3.AppFragment:
        s = self.spec
        if request.function_code == dnp3.READ:
            bi, ai = self.measurements(conn.o, t)
            objs = [dnp3.ObjectBlock(1, s.binary_variation, 0x00, list(range(s.n_binary)), bi),
                    dnp3.ObjectBlock(30, s.analog_variation, 0x00, list(range(s.n_analog)), ai)]
        elif request.function_code == dnp3.DIRECT_OPERATE:
            objs = [dnp3.ObjectBlock(b.group, b.variation, b.qualifier, list(b.indices), list(b.values))
                    for b in request.objects]
        else:
            objs = []
        return dnp3.AppFragment(request.al_ctrl, dnp3.RESPONSE, "response", objs)

    def command(self, conn, k: int) -> dnp3.AppFragment:
        if self.spec.use_case == "UC2" and k % 2 == 1:
            setpoint = int(round(self.ai_base[conn.o, 0] * self.setpoint_factor[conn.o]))
            obj = dnp3.ObjectBlock(41, 2, 0x28, [0], [min(setpoint, 32767)])
        else:
            crob = {"code": 0x41, "count": 1, "on": 100, "off": 0, "status": 0}
            obj = dnp3.ObjectBlock(12, 1, 0x28, [0], [crob])
        return dnp3.AppFragment(self._ac(conn), dnp3.DIRECT_OPERATE, "request", [obj])

    # -- main loop --

    def run(self):
        s = self.spec
        pi = round(s.polling_interval_s * 1e6)
        dur = round(s.duration_s * 1e6)
        n_polls = dur // pi
        conns = [_Conn(m, o, self.masters[m], self.outstations[o])
                 for m in range(s.n_masters) for o in range(s.n_outstations)]
        n_pairs = len(conns)
        for c in conns:
            # sequence counters start mid-cycle, as on a long-running link
            c.m_tl, c.o_tl, c.app_seq = (int(v) for v in self.rng_time.integers(0, [64, 64, 16]))
        jitter = JITTER_FRACTION * pi
        jobs = []  # (time, order, conn, kind, k)
        for idx, c in enumerate(conns):
            phase = pi * (0.1 + 0.8 * idx / n_pairs)
            jobs.append((EPOCH_US + 1000 * (idx + 1), len(jobs), c, "disable", 0))
            for k in range(n_polls):
                u = self.rng_time.uniform(-1.0, 1.0)
                jobs.append((EPOCH_US + int(k * pi + phase + u * jitter), len(jobs), c, "poll", k))
        for k, tc in enumerate(self.timeline.command_times):
            for o in sorted(self.targeted):
                jobs.append((tc, len(jobs), conns[o], "command", k))
        jobs.sort(key=lambda j: (j[0], j[1]))
        for t, _, c, kind, k in jobs:
            if kind == "poll":
                self._exchange(c, t, self.read_request(c))
            elif kind == "disable":
                objs = [dnp3.ObjectBlock(60, v, 0x06, []) for v in (2, 3, 4)]
                self._exchange(c, t, dnp3.AppFragment(self._ac(c), dnp3.DISABLE_UNSOLICITED, "request", objs))
            else:
                if s.use_case == "UC2" and k % 2 == 1:
                    self.setpoint_active[c.o] = True
                self._exchange(c, t, self.command(c, k), injected=True)
        self.packets.sort(key=lambda r: (r[0], r[1]))
        return self

    # -- derived sensor streams --

    def alerts(self) -> list[AlertEvent]:
        s = self.spec
        out = []
        for t, _, pkt, meta in self.packets:
            eligible = self.timeline.in_window(t) and ATTACKER_MAC in (pkt.eth_src, pkt.eth_dst)
            if eligible:
                if self.rng_alert.random() < s.snort_detect_prob:
                    kind = "DNP3" if meta.get("injected") else "ARP_SPOOF"
                    out.append(AlertEvent(t, kind, SIGNATURES[kind]))
            elif self.rng_alert.random() < s.snort_false_alarm_rate:
                kind = FALSE_ALARM_TYPES[int(self.rng_alert.integers(len(FALSE_ALARM_TYPES)))]
                out.append(AlertEvent(t, kind, SIGNATURES[kind]))
        return out

    def flows(self) -> list[FlowEvent]:
        period = round(self.spec.flow_period_s * 1e6)
        groups: dict[tuple, list] = {}
        for t, _, pkt, meta in self.packets:
            key = (meta["conn"], (t - EPOCH_US) // period)
            groups.setdefault(key, []).append(pkt)
        last_period = {}
        for conn, p in groups:
            last_period[conn] = max(p, last_period.get(conn, p))
        out = []
        for (conn, p), pkts in sorted(groups.items()):
            m, o = conn
            start, end = pkts[0].ts_us, pkts[-1].ts_us
            src_ip = self.masters[m].ip
            out.append(FlowEvent(start, end, f"conn-{m:02d}-{o:02d}", last_period[conn] == p,
                                 sum(1 for q in pkts if q.ip_src == src_ip), end - start))
        out.sort(key=lambda f: (f.event_start_us, f.flow_id))
        return out


def simulate(spec: ScenarioSpec):
    """In-memory scenario: (packets, flows, alerts, simulator)."""
    sim = Simulator(spec).run()
    pkts = [p for _, _, p, _ in sim.packets]
    return pkts, sim.flows(), sim.alerts(), sim


def _manifest(spec, sim, windows, n_packets) -> dict:
    pi_us = round(spec.polling_interval_s * 1e6)
    return {
        "format_version": FORMAT_VERSION,
        "use_case": spec.use_case,
        "n_masters": spec.n_masters,
        "polling_interval_s": spec.polling_interval_s,
        "windows": [w.to_json() for w in windows],
        "seed": spec.seed,
        "spec": asdict(spec),
        "epoch_us": EPOCH_US,
        "poll_jitter_fraction": JITTER_FRACTION,
        "cadence_tolerance_us": int(2 * JITTER_FRACTION * pi_us),
        "attacker_mac": ATTACKER_MAC,
        "targeted_outstations": [sim.outstations[o].addr for o in sorted(sim.targeted)],
        "command_times_us": list(sim.timeline.command_times),
        "injected_retransmissions": sim.injected_retransmissions,
        "n_packets": n_packets,
        "files": {"capture": "capture.jsonl", "flows": "flows.jsonl", "alerts": "alerts.jsonl"},
    }


def generate_scenario(spec: ScenarioSpec, out_dir) -> ScenarioBundle:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ScenarioError(f"cannot write scenario to {out}: {exc}") from None
    pkts, flows, alerts, sim = simulate(spec)
    windows = ground_truth_windows(spec)
    manifest = _manifest(spec, sim, windows, len(pkts))
    paths = {k: out / v for k, v in manifest["files"].items()}
    write_jsonl(paths["capture"], (p.to_json() for p in pkts))
    write_jsonl(paths["flows"], (asdict(f) for f in flows))
    write_jsonl(paths["alerts"], (asdict(a) for a in alerts))
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return ScenarioBundle(out, paths["capture"], paths["flows"], paths["alerts"], manifest_path,
                          windows, manifest)


def spec_from_dict(d: dict) -> ScenarioSpec:
    known = set(ScenarioSpec.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    return ScenarioSpec(**d)
