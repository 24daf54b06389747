"""Classic pcap parsing, TCP flow reassembly and SNI extraction."""

from __future__ import annotations

import ipaddress
import json
import struct
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import PcapFormatError
from .trace import Connection, Direction, SampleMeta, TraceSample, check_sample

PREFIX_BYTES = 512
SNI_PACKETS = 3
DEFAULT_PORTS = frozenset({443, 80})

FIN, SYN, RST, PSH, ACK = 0x01, 0x02, 0x04, 0x08, 0x10

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = (101, 12)
LINKTYPE_IPV4 = 228
LINKTYPE_IPV6 = 229
LINKTYPE_LINUX_SLL = 113

_MAGIC = {
    b"\xd4\xc3\xb2\xa1": ("<", 1),
    b"\xa1\xb2\xc3\xd4": (">", 1),
    b"\x4d\x3c\xb2\xa1": ("<", 1000),
    b"\xa1\xb2\x3c\x4d": (">", 1000),
}


class RawPacket(NamedTuple):
    ts: int  # microseconds since the epoch
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    tcp_flags: int
    seq: int
    payload_len: int
    payload_prefix: bytes
    ip_len: int = 0  # IP header + TCP header + payload


class FlowKey(NamedTuple):
    a_ip: str
    a_port: int
    b_ip: str
    b_port: int

    @classmethod
    def of(cls, pkt: RawPacket) -> "FlowKey":
        src = (ipaddress.ip_address(pkt.src_ip), pkt.src_port)
        dst = (ipaddress.ip_address(pkt.dst_ip), pkt.dst_port)
        lo, hi = sorted([src, dst], key=lambda e: (e[0].version, e[0], e[1]))
        return cls(str(lo[0]), lo[1], str(hi[0]), hi[1])


@dataclass
class IngestDiagnostics:
    records: int = 0
    tcp_packets: int = 0
    skipped_non_tcp: int = 0
    skipped_fragments: int = 0
    truncated_records: int = 0
    tcp_payload_bytes: int = 0
    first_record_us: int | None = None
    flows: int = 0
    synless_flows: int = 0
    duplicate_segments: int = 0
    dropped_zero_payload: int = 0
    port_filtered_flows: int = 0
    port_filtered_bytes: int = 0
    empty_flows: int = 0
    emitted_payload_bytes: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# pcap records


def _ipv4(buf: bytes, ts: int, diag: IngestDiagnostics):
    if len(buf) < 20 or buf[0] >> 4 != 4:
        return None
    ihl = (buf[0] & 0x0F) * 4
    total = struct.unpack_from("!H", buf, 2)[0]
    frag = struct.unpack_from("!H", buf, 6)[0]
    if buf[9] != 6:
        return None
    if frag & 0x1FFF or frag & 0x2000:
        diag.skipped_fragments += 1
        return None
    return _tcp(buf[ihl:total], total - ihl, ts, _ip4(buf[12:16]), _ip4(buf[16:20]), total)


def _ip4(b: bytes) -> str:
    return str(ipaddress.IPv4Address(b))


_IPV6_EXT = {0, 43, 60}  # hop-by-hop, routing, destination options


def _ipv6(buf: bytes, ts: int, diag: IngestDiagnostics):
    if len(buf) < 40 or buf[0] >> 4 != 6:
        return None
    plen = struct.unpack_from("!H", buf, 4)[0]
    nxt, off = buf[6], 40
    while nxt in _IPV6_EXT and off + 8 <= len(buf):
        nxt, off = buf[off], off + (buf[off + 1] + 1) * 8
    if nxt == 44:
        diag.skipped_fragments += 1
        return None
    if nxt != 6:
        return None
    src = str(ipaddress.IPv6Address(buf[8:24]))
    dst = str(ipaddress.IPv6Address(buf[24:40]))
    seg_len = 40 + plen - off
    return _tcp(buf[off: 40 + plen], seg_len, ts, src, dst, 40 + plen)


def _tcp(seg: bytes, seg_len: int, ts: int, src: str, dst: str, ip_len: int):
    if len(seg) < 20:
        return None
    sport, dport, seq = struct.unpack_from("!HHI", seg, 0)
    hlen = (seg[12] >> 4) * 4
    flags = seg[13]
    payload_len = max(0, seg_len - hlen)
    prefix = bytes(seg[hlen: hlen + min(payload_len, PREFIX_BYTES)])
    return RawPacket(ts, src, dst, sport, dport, flags, seq, payload_len, prefix, ip_len)


def _network(frame: bytes, link: int):
    """Strip the link header; return (ethertype-like family, payload)."""
    if link == LINKTYPE_ETHERNET:
        off, etype = 14, struct.unpack_from("!H", frame, 12)[0] if len(frame) >= 14 else 0
        while etype in (0x8100, 0x88A8) and len(frame) >= off + 4:
            etype = struct.unpack_from("!H", frame, off + 2)[0]
            off += 4
        return etype, frame[off:]
    if link == LINKTYPE_LINUX_SLL:
        etype = struct.unpack_from("!H", frame, 14)[0] if len(frame) >= 16 else 0
        return etype, frame[16:]
    if link in LINKTYPE_RAW or link in (LINKTYPE_IPV4, LINKTYPE_IPV6):
        version = frame[0] >> 4 if frame else 0
        return {4: 0x0800, 6: 0x86DD}.get(version, 0), frame
    raise PcapFormatError(f"unsupported link type {link}")


def parse_pcap(data: bytes, diagnostics: IngestDiagnostics | None = None) -> list[RawPacket]:
    """One :class:`RawPacket` per TCP record of a classic pcap byte stream.

    Both byte orders and the microsecond and nanosecond variants are
    accepted; timestamps come out in microseconds.  Non-TCP records are
    skipped; a truncated trailing record ends parsing and is counted.
    """
    diag = diagnostics if diagnostics is not None else IngestDiagnostics()
    if len(data) < 24 or data[:4] not in _MAGIC:
        raise PcapFormatError(f"not a classic pcap stream (magic {data[:4].hex() or 'missing'})")
    endian, frac_div = _MAGIC[data[:4]]
    link = struct.unpack_from(endian + "I", data, 20)[0] & 0x0FFFFFFF
    if link not in (LINKTYPE_ETHERNET, LINKTYPE_LINUX_SLL, LINKTYPE_IPV4, LINKTYPE_IPV6) + LINKTYPE_RAW:
        raise PcapFormatError(f"unsupported link type {link}")
    rec = struct.Struct(endian + "IIII")
    out: list[RawPacket] = []
    pos = 24
    while pos < len(data):
        if pos + 16 > len(data):
            diag.truncated_records += 1
            break
        sec, frac, incl, _orig = rec.unpack_from(data, pos)
        pos += 16
        if pos + incl > len(data):
            diag.truncated_records += 1
            break
        frame = data[pos: pos + incl]
        pos += incl
        ts = sec * 1_000_000 + frac // frac_div
        diag.records += 1
        if diag.first_record_us is None:
            diag.first_record_us = ts
        try:
            family, payload = _network(frame, link)
            if family == 0x0800:
                pkt = _ipv4(payload, ts, diag)
            elif family == 0x86DD:
                pkt = _ipv6(payload, ts, diag)
            else:
                pkt = None
        except struct.error:
            pkt = None
        if pkt is None:
            diag.skipped_non_tcp += 1
            continue
        diag.tcp_packets += 1
        diag.tcp_payload_bytes += pkt.payload_len
        out.append(pkt)
    return out


# --------------------------------------------------------------------------
# SNI


def _handshake_bytes(data: bytes) -> bytes:
    """Concatenated payloads of the leading TLS handshake records (truncation tolerated)."""
    out, pos = bytearray(), 0
    while pos + 5 <= len(data) and data[pos] == 22 and data[pos + 1] == 3:
        length = struct.unpack_from("!H", data, pos + 3)[0]
        out += data[pos + 5: pos + 5 + length]
        pos += 5 + length
    return bytes(out)


def extract_sni(data: bytes) -> str | None:
    """Host name from the server_name extension of a TLS ClientHello, if any.

    Returned lower-case without a trailing dot.
    """
    hs = _handshake_bytes(bytes(data))
    try:
        if len(hs) < 4 or hs[0] != 1:
            return None
        pos = 4 + 2 + 32
        pos += 1 + hs[pos]  # session id
        pos += 2 + struct.unpack_from("!H", hs, pos)[0]  # cipher suites
        pos += 1 + hs[pos]  # compression methods
        if pos + 2 > len(hs):
            return None
        end = min(len(hs), pos + 2 + struct.unpack_from("!H", hs, pos)[0])
        pos += 2
        while pos + 4 <= end:
            etype, elen = struct.unpack_from("!HH", hs, pos)
            pos += 4
            if etype == 0x0000:
                return _server_name(hs[pos: pos + elen])
            pos += elen
    except (struct.error, IndexError):
        return None
    return None


def _server_name(ext: bytes) -> str | None:
    if len(ext) < 2:
        return None
    end = min(len(ext), 2 + struct.unpack_from("!H", ext, 0)[0])
    pos = 2
    while pos + 3 <= end:
        name_type, nlen = ext[pos], struct.unpack_from("!H", ext, pos + 1)[0]
        pos += 3
        if pos + nlen > len(ext):
            return None
        if name_type == 0:
            try:
                name = ext[pos: pos + nlen].decode("ascii").lower().rstrip(".")
            except UnicodeDecodeError:
                return None
            return name or None
        pos += nlen
    return None


# --------------------------------------------------------------------------
# flows


def _client_endpoint(pkts: list[RawPacket]):
    for p in pkts:
        if p.tcp_flags & SYN and not p.tcp_flags & ACK:
            return (p.src_ip, p.src_port), True
    for p in pkts:
        if p.tcp_flags & SYN and p.tcp_flags & ACK:
            return (p.dst_ip, p.dst_port), True
    return (pkts[0].src_ip, pkts[0].src_port), False


def reassemble_flows(
    packets: Iterable[RawPacket],
    retain_acks: bool = False,
    ports: Iterable[int] | None = DEFAULT_PORTS,
    diagnostics: IngestDiagnostics | None = None,
    origin_us: int | None = None,
    first_keystroke_us: int | None = None,
) -> list[Connection]:
    """Group packets into connections with client-relative directions.

    The client is the sender of the first SYN; failing that the receiver of
    a SYN-ACK; failing that the source of the first packet (counted as a
    SYN-less flow).  Packet size is the TCP payload length and zero-payload
    packets are dropped, unless ``retain_acks`` is set, in which case every
    packet is kept and sized by its IP length.  Timestamps are made relative
    to ``origin_us`` (default: earliest packet).  Only flows whose server
    port is in ``ports`` are kept (``None`` keeps all).
    """
    diag = diagnostics if diagnostics is not None else IngestDiagnostics()
    pkts = sorted(packets, key=lambda p: p.ts)
    if origin_us is None:
        origin_us = pkts[0].ts if pkts else 0
    keep_ports = None if ports is None else frozenset(ports)
    flows: dict[FlowKey, list[RawPacket]] = defaultdict(list)
    for p in pkts:
        flows[FlowKey.of(p)].append(p)

    out: list[Connection] = []
    for key, fp in flows.items():
        diag.flows += 1
        client, from_syn = _client_endpoint(fp)
        if not from_syn:
            diag.synless_flows += 1
        server_port = key.b_port if (key.a_ip, key.a_port) == client else key.a_port
        if keep_ports is not None and server_port not in keep_ports:
            diag.port_filtered_flows += 1
            diag.port_filtered_bytes += sum(p.payload_len for p in fp)
            continue
        seen, rows, hello = set(), [], []
        for p in fp:
            outgoing = (p.src_ip, p.src_port) == client
            if p.payload_len > 0:
                tag = (outgoing, p.seq, p.payload_len)
                if tag in seen:
                    diag.duplicate_segments += 1
                seen.add(tag)
                if outgoing and len(hello) < SNI_PACKETS:
                    hello.append(p)
            elif not retain_acks:
                diag.dropped_zero_payload += 1
                continue
            size = p.ip_len if retain_acks else p.payload_len
            d = Direction.OUTGOING if outgoing else Direction.INCOMING
            rows.append((p.ts - origin_us, int(d), size))
        if not rows:
            diag.empty_flows += 1
            continue
        diag.emitted_payload_bytes += sum(p.payload_len for p in fp)
        out.append(Connection.from_packets(
            rows,
            server_name=extract_sni(_hello_bytes(hello)),
            server_port=server_port,
            established_before_typing=first_keystroke_us is not None and rows[0][0] < first_keystroke_us,
        ))
    out.sort(key=lambda c: c.first_timestamp)
    return out


def _hello_bytes(hello: list[RawPacket]) -> bytes:
    """Join client payload prefixes; stop after a truncated prefix so bytes stay contiguous."""
    buf = bytearray()
    for p in hello:
        buf += p.payload_prefix
        if len(p.payload_prefix) < p.payload_len:
            break
    return bytes(buf)


def ingest_session(
    pcap_path: str | Path,
    meta: SampleMeta,
    retain_acks: bool = False,
    ports: Iterable[int] | None = DEFAULT_PORTS,
    diagnostics: IngestDiagnostics | None = None,
) -> TraceSample:
    """Parse one capture into a validated sample.

    Timestamps are relative to the first record in the file.  Connections
    whose first packet precedes ``meta.first_keystroke_us`` are flagged as
    established before typing.
    """
    diag = diagnostics if diagnostics is not None else IngestDiagnostics()
    raw = parse_pcap(Path(pcap_path).read_bytes(), diag)
    conns = reassemble_flows(
        raw, retain_acks=retain_acks, ports=ports, diagnostics=diag,
        origin_us=diag.first_record_us, first_keystroke_us=meta.first_keystroke_us,
    )
    return check_sample(TraceSample(meta, tuple(conns)))
