"""The 28-column fused feature schema and its imputation defaults."""

NAN = "Nan"

# (name, default, kind) in table order.  ``kind`` is "numeric" or "categorical".
SCHEMA = (
    ("Frame Len", 0, "numeric"),
    ("Frame Prot.", NAN, "categorical"),
    ("Eth Src", "0", "categorical"),
    ("Eth Dst", "0", "categorical"),
    ("IP Src", "0", "categorical"),
    ("IP Dst", "0", "categorical"),
    ("IP Len", 0, "numeric"),
    ("IP Flags", "0x00", "categorical"),
    ("Src Port", 0, "numeric"),
    ("Dest Port", 0, "numeric"),
    ("TCP Len", 0, "numeric"),
    ("TCP Flags", "0x00", "categorical"),
    ("Retrans.", 0, "numeric"),
    ("RTT", -1.0, "numeric"),
    ("Flow Cnt", -1, "numeric"),
    ("Flow Fin Cnt", -1, "numeric"),
    ("Packets", -1, "numeric"),
    ("Snort Alert", 0, "numeric"),
    ("Alert Type", NAN, "categorical"),
    ("LL Src", -1, "numeric"),
    ("LL Dest", -1, "numeric"),
    ("LL Len", 0, "numeric"),
    ("LL Ctrl", "0x00", "categorical"),
    ("TL Ctrl", "0x00", "categorical"),
    ("Func. code", -1, "numeric"),
    ("AL Ctrl", "0x00", "categorical"),
    ("Obj count", 0, "numeric"),
    ("AL Payload", NAN, "categorical"),
)

COLUMNS = tuple(name for name, _, _ in SCHEMA)
DEFAULTS = {name: default for name, default, _ in SCHEMA}
KINDS = {name: kind for name, _, kind in SCHEMA}
CATEGORICAL = tuple(n for n in COLUMNS if KINDS[n] == "categorical")

N_CYBER = 19
CYBER_COLUMNS = COLUMNS[:N_CYBER]
PHYSICAL_COLUMNS = COLUMNS[N_CYBER:]
BASE_COLUMNS = COLUMNS[:12]

# columns whose imputed default is a negative sentinel
SENTINEL_COLUMNS = tuple(n for n in COLUMNS if KINDS[n] == "numeric" and DEFAULTS[n] == -1)


def hex8(value) -> str:
    return f"0x{int(value) & 0xFF:02x}"


def payload_signature(payload: dict | None) -> str:
    """Categorical rendering of DNP3 point values: ``KIND:count:v1,v2|...``.

    Binary points render as 0/1, analogs are rounded to integers and
    zero-padded so that lexicographic order follows numeric order per slot.
    """
    if payload is None:
        return NAN
    parts = []
    for kind, values in payload.items():
        if kind in ("BI", "BO") or kind == "CLASS":
            rendered = ",".join(str(int(v)) for v in values)
        else:
            rendered = ",".join(f"{int(round(v)):+08d}" for v in values)
        parts.append(f"{kind}:{len(values)}:{rendered}")
    return "|".join(parts) if parts else "EMPTY"
