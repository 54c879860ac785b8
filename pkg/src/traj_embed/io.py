"""Readers and writers for specs, operators, bases and event logs.

All JSON is written canonically (sorted keys, two-space indent, shortest
round-trip float repr) so that read -> write is byte-stable.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .process_core import (
    Branch,
    DiscreteBranch,
    DiscreteProcessSpec,
    EventLog,
    ExpMixture,
    Exponential,
    ProcessSpec,
    Tabulated,
)


class FormatError(ValueError):
    """Input document is malformed; the message names the location."""


_NAME = {"type": ["string", "integer"]}

SPEC_SCHEMA = {
    "type": "object",
    "required": ["kind", "symbols", "branches"],
    "properties": {
        "kind": {"enum": ["hsmm", "hmm"]},
        "symbols": {"type": "array", "items": _NAME, "minItems": 1},
        "modes": {"type": "array", "items": _NAME, "minItems": 1},
        "states": {"type": "array", "items": _NAME, "minItems": 1},
        "branches": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "symbol", "prob", "to"],
                "properties": {
                    "from": _NAME,
                    "symbol": _NAME,
                    "to": _NAME,
                    "prob": {"type": "number"},
                    "phase": {"type": "number"},
                    "dwell": {
                        "type": "object",
                        "required": ["type", "params"],
                        "properties": {
                            "type": {"enum": ["exponential", "exp_mixture", "tabulated"]},
                            "params": {"type": "object"},
                        },
                    },
                },
            },
        },
    },
}


# ---------------------------------------------------------------------------
# canonical JSON
# ---------------------------------------------------------------------------

def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj: Any) -> None:
    Path(path).write_text(dumps(obj))


def load_json(path) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


# ---------------------------------------------------------------------------
# complex matrices
# ---------------------------------------------------------------------------

def encode_complex(a) -> Any:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        return {"re": float(a.real), "im": float(a.imag)}
    return [encode_complex(v) for v in a]


def decode_complex(obj) -> np.ndarray:
    if isinstance(obj, dict):
        return np.asarray(complex(obj.get("re", 0.0), obj.get("im", 0.0)))
    if isinstance(obj, (int, float)):
        return np.asarray(complex(obj))
    return np.asarray([decode_complex(v) for v in obj], dtype=complex)


# ---------------------------------------------------------------------------
# process specs
# ---------------------------------------------------------------------------

def _dwell_from_dict(d: dict, where: str):
    kind, params = d["type"], d["params"]
    try:
        if kind == "exponential":
            return Exponential(float(params["rate"]))
        if kind == "exp_mixture":
            return ExpMixture(tuple(params["weights"]), tuple(params["rates"]))
        return Tabulated(params["t"], params["density"])
    except KeyError as exc:
        raise FormatError(f"{where}: dwell of type {kind!r} is missing parameter {exc}") from None


def _dwell_to_dict(dwell) -> dict:
    if isinstance(dwell, Exponential):
        return {"type": "exponential", "params": {"rate": float(dwell.rate)}}
    if isinstance(dwell, ExpMixture):
        return {"type": "exp_mixture", "params": {"weights": list(dwell.weights), "rates": list(dwell.rates)}}
    return {"type": "tabulated", "params": {"t": dwell.t_grid.tolist(), "density": dwell.density.tolist()}}


def spec_from_dict(doc: dict):
    try:
        jsonschema.validate(doc, SPEC_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise FormatError(f"at {loc}: {exc.message}") from None
    symbols = tuple(str(s) for s in doc["symbols"])
    key = "modes" if doc["kind"] == "hsmm" else "states"
    if key not in doc:
        raise FormatError(f"at <root>: a {doc['kind']!r} spec needs a {key!r} list")
    modes = tuple(str(m) for m in doc[key])
    grouped: dict[str, list] = {m: [] for m in modes}
    for i, b in enumerate(doc["branches"]):
        where = f"branches/{i}"
        src = str(b["from"])
        if doc["kind"] == "hsmm":
            if "dwell" not in b:
                raise FormatError(f"at {where}: hsmm branches need a 'dwell'")
            br = Branch(str(b["symbol"]), float(b["prob"]), str(b["to"]), _dwell_from_dict(b["dwell"], where))
        else:
            br = DiscreteBranch(str(b["symbol"]), float(b["prob"]), str(b["to"]), float(b.get("phase", 0.0)))
        grouped.setdefault(src, []).append(br)
    branches = {m: tuple(bs) for m, bs in grouped.items()}
    if doc["kind"] == "hsmm":
        return ProcessSpec(symbols, modes, branches)
    return DiscreteProcessSpec(symbols, modes, branches)


def spec_to_dict(spec) -> dict:
    discrete = isinstance(spec, DiscreteProcessSpec)
    rows = []
    for g in spec.states:
        for b in spec.branches.get(g, ()):
            row = {"from": g, "symbol": b.symbol, "prob": float(b.prob), "to": b.successor}
            if discrete:
                row["phase"] = float(b.phase)
            else:
                row["dwell"] = _dwell_to_dict(b.dwell)
            rows.append(row)
    doc = {"kind": "hmm" if discrete else "hsmm", "symbols": list(spec.symbols), "branches": rows}
    doc["states" if discrete else "modes"] = list(spec.states)
    return doc


def read_spec(path):
    return spec_from_dict(load_json(path))


def write_spec(path, spec) -> None:
    write_json(path, spec_to_dict(spec))


def spec_hash(spec) -> str:
    return hashlib.sha256(dumps(spec_to_dict(spec)).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Lindblad operators
# ---------------------------------------------------------------------------

def lindblad_to_dict(lb) -> dict:
    doc = {
        "dim": int(lb.dim),
        "H": encode_complex(lb.H),
        "H_eff": encode_complex(lb.H_eff),
        "jumps": {x: encode_complex(J) for x, J in lb.jumps.items()},
        "symbols": list(lb.jumps),
    }
    if lb.initial_state is not None:
        doc["initial_state"] = encode_complex(lb.initial_state)
    if lb.metadata:
        doc["metadata"] = lb.metadata
    return doc


def lindblad_from_dict(doc: dict):
    from .embedding import Lindblad

    for k in ("dim", "H_eff", "jumps"):
        if k not in doc:
            raise FormatError(f"at <root>: lindblad document is missing {k!r}")
    order = [str(s) for s in doc.get("symbols", sorted(doc["jumps"]))]
    jumps = {x: decode_complex(doc["jumps"][x]) for x in order}
    H_eff = decode_complex(doc["H_eff"])
    H = decode_complex(doc["H"]) if "H" in doc else None
    init = decode_complex(doc["initial_state"]) if "initial_state" in doc else None
    lb = Lindblad(H=H, H_eff=H_eff, jumps=jumps, initial_state=init, metadata=doc.get("metadata", {}))
    if lb.dim != int(doc["dim"]):
        raise FormatError(f"at dim: declared {doc['dim']} but matrices are {lb.dim}x{lb.dim}")
    return lb


def read_lindblad(path):
    return lindblad_from_dict(load_json(path))


def write_lindblad(path, lb) -> None:
    write_json(path, lindblad_to_dict(lb))


# ---------------------------------------------------------------------------
# Kraus sets and bases
# ---------------------------------------------------------------------------

def kraus_to_dict(ks) -> dict:
    return {
        "dt": float(ks.dt),
        "K0": encode_complex(ks.K0),
        "Kx": {x: encode_complex(K) for x, K in ks.Kx.items()},
    }


def basis_to_dict(basis) -> dict:
    nodes = basis.reference_nodes()
    return {
        "dimension": int(basis.dimension),
        "pathway": basis.pathway,
        "nodes": [{"g": g, "t": float(t)} for g, t in nodes],
        "vectors": encode_complex(np.array([basis.embed(g, t) for g, t in nodes])),
    }


# ---------------------------------------------------------------------------
# event logs
# ---------------------------------------------------------------------------

def write_events_jsonl(path, log: EventLog) -> None:
    with open(path, "w") as fh:
        for i, (x, t) in enumerate(log):
            rec: dict = {"t": t, "x": x}
            if log.traj is not None:
                rec["traj"] = int(log.traj[i])
            if log.modes is not None:
                rec["mode"] = log.modes[i]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_events_jsonl(path) -> EventLog:
    symbols, waits, traj, modes = [], [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                symbols.append(str(rec["x"]))
                waits.append(float(rec["t"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}: line {lineno}: bad event record ({exc})") from None
            traj.append(rec.get("traj"))
            modes.append(rec.get("mode"))
    return EventLog(
        symbols,
        np.asarray(waits),
        modes=[str(m) for m in modes] if modes and all(m is not None for m in modes) else None,
        traj=np.asarray(traj) if traj and all(k is not None for k in traj) else None,
    )


def write_events_csv(path, log: EventLog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["symbol", "wait"]
        if log.traj is not None:
            header.append("traj")
        if log.modes is not None:
            header.append("mode")
        w.writerow(header)
        for i, (x, t) in enumerate(log):
            row = [x, repr(t)]
            if log.traj is not None:
                row.append(int(log.traj[i]))
            if log.modes is not None:
                row.append(log.modes[i])
            w.writerow(row)


def read_events_csv(path) -> EventLog:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"symbol", "wait"} <= set(rows[0]):
        raise FormatError(f"{path}: header must contain 'symbol,wait'")
    return EventLog(
        [r["symbol"] for r in rows],
        np.asarray([float(r["wait"]) for r in rows]),
        modes=[r["mode"] for r in rows] if rows and "mode" in rows[0] else None,
        traj=np.asarray([int(r["traj"]) for r in rows]) if rows and "traj" in rows[0] else None,
    )


def read_events(path) -> EventLog:
    return read_events_csv(path) if str(path).endswith(".csv") else read_events_jsonl(path)


def write_events(path, log: EventLog) -> None:
    if str(path).endswith(".csv"):
        write_events_csv(path, log)
    else:
        write_events_jsonl(path, log)
