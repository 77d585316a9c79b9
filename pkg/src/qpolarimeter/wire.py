"""Wire schema, capture files, and the versioned configuration document.

Everything the service and its clients exchange is line-oriented JSON with
a ``type`` discriminator:

* ``hello``   - handshake: schema version, setting list, config echo.
* ``frame``   - one WireFrame (see :func:`frame_to_wire` for the exact
  field order; the layout is part of the public contract).
* ``ack``     - command acknowledgement: ``req_id`` plus either
  ``applied_seq`` or ``error``.

Clients send WireCommands: ``{"cmd": ..., "value": ..., "req_id": ...}``.

Serialization uses :func:`dumps_wire` (compact separators, fixed key
order, repr-exact floats) so that serialize-deserialize-serialize is
byte-identical; capture files hold one frame line per frame.
"""

from __future__ import annotations

import json
from typing import IO, Any

import numpy as np

from .engine import Ack, Command, EngineConfig, Frame, SourceState, TARGET_STATES
from .measurement import BASIS_NAMES, NoiseModel
from .quantum import DensityMatrix, stokes_from_density
from .simlab import TimingProfile

__all__ = [
    "SCHEMA_VERSION",
    "SchemaError",
    "COMMAND_NAMES",
    "dumps_wire",
    "density_to_wire",
    "density_from_wire",
    "frame_to_wire",
    "validate_wire_frame",
    "command_to_wire",
    "command_from_wire",
    "ack_to_wire",
    "hello_message",
    "write_capture",
    "read_capture",
    "default_config",
    "load_config",
    "noise_from_config",
    "timing_from_config",
    "engine_from_config",
    "source_from_config",
]

SCHEMA_VERSION = 1

COMMAND_NAMES = ("set_theta", "set_car", "set_rate", "set_window", "pause", "resume", "set_target")

_FRAME_KEYS = (
    "type", "v", "seq", "t", "rho", "stokes", "fidelity", "purity",
    "concurrence", "window_m", "solve_ms", "source", "flags",
)


class SchemaError(ValueError):
    """A wire message does not match the published schema."""


def dumps_wire(obj: dict) -> str:
    """Canonical one-line JSON encoding (stable key order, exact floats)."""
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def density_to_wire(rho: DensityMatrix) -> list[float]:
    """32 reals: (re, im) pairs of the 4x4 matrix in row-major order."""
    flat = rho.matrix.reshape(16)
    out: list[float] = []
    for z in flat:
        out.extend((float(z.real), float(z.imag)))
    return out


def density_from_wire(values: list[float]) -> DensityMatrix:
    """Inverse of :func:`density_to_wire`; validates all state invariants."""
    arr = np.asarray(values, dtype=float)
    if arr.shape != (32,):
        raise SchemaError(f"rho field must hold 32 reals, got {arr.shape}")
    m = (arr[0::2] + 1j * arr[1::2]).reshape(4, 4)
    try:
        return DensityMatrix(m)
    except ValueError as exc:
        raise SchemaError(f"rho field is not a legal state: {exc}") from exc


def frame_to_wire(frame: Frame) -> dict:
    """WireFrame payload; key order is fixed and part of the contract."""
    return {
        "type": "frame",
        "v": SCHEMA_VERSION,
        "seq": frame.seq,
        "t": frame.emit_time,
        "rho": density_to_wire(frame.rho),
        "stokes": [float(x) for x in stokes_from_density(frame.rho).reshape(16)],
        "fidelity": frame.fidelity_to_target,
        "purity": frame.purity,
        "concurrence": frame.concurrence,
        "window_m": frame.window_m,
        "solve_ms": frame.solve_time * 1000.0,
        "source": {
            "theta": frame.source.theta,
            "car": frame.source.car,
            "rate": frame.source.pair_rate,
        },
        "flags": list(frame.flags),
    }


def validate_wire_frame(payload: Any) -> dict:
    """Check a parsed frame message against the schema; returns it unchanged.

    The rho field is additionally required to decode to a legal density
    matrix.  Raises :class:`SchemaError` with the offending field.
    """
    if not isinstance(payload, dict):
        raise SchemaError("frame payload must be an object")
    missing = [k for k in _FRAME_KEYS if k not in payload]
    if missing:
        raise SchemaError(f"frame payload missing fields: {', '.join(missing)}")
    if payload["type"] != "frame":
        raise SchemaError(f"expected type 'frame', got {payload['type']!r}")
    if payload["v"] != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {payload['v']!r}")
    if not isinstance(payload["seq"], int) or payload["seq"] < 0:
        raise SchemaError("seq must be a nonnegative integer")
    density_from_wire(payload["rho"])
    if not (isinstance(payload["stokes"], list) and len(payload["stokes"]) == 16):
        raise SchemaError("stokes field must hold 16 reals")
    for key in ("fidelity", "purity", "concurrence", "t", "solve_ms"):
        if not isinstance(payload[key], (int, float)):
            raise SchemaError(f"{key} must be a number")
    source = payload["source"]
    if not isinstance(source, dict) or {"theta", "car", "rate"} - set(source):
        raise SchemaError("source must carry theta, car, rate")
    if not isinstance(payload["flags"], list):
        raise SchemaError("flags must be a list")
    return payload


def command_to_wire(command: Command) -> dict:
    return {"cmd": command.action, "value": command.value, "req_id": command.req_id}


def command_from_wire(payload: Any) -> Command:
    if not isinstance(payload, dict) or "cmd" not in payload:
        raise SchemaError("command payload must be an object with a 'cmd' field")
    cmd = payload["cmd"]
    if cmd not in COMMAND_NAMES:
        raise SchemaError(f"unknown command {cmd!r}")
    return Command(action=cmd, value=payload.get("value"), req_id=payload.get("req_id"))


def ack_to_wire(ack: Ack) -> dict:
    payload: dict = {"type": "ack", "req_id": ack.req_id}
    if ack.error is None:
        payload["applied_seq"] = ack.applied_seq
    else:
        payload["error"] = ack.error
    return payload


def hello_message(config: EngineConfig, source: SourceState) -> dict:
    return {
        "type": "hello",
        "v": SCHEMA_VERSION,
        "settings": [f"{b1}x{b2}" for b1 in BASIS_NAMES for b2 in BASIS_NAMES],
        "commands": list(COMMAND_NAMES),
        "targets": ["auto", *TARGET_STATES],
        "config": {
            "window_m": config.window_m,
            "pacing": config.pacing,
            "tau_m": config.timing.tau_m,
            "tau_s": config.timing.tau_s,
            "seed": config.seed,
            "source": {
                "theta": source.theta,
                "car": source.car,
                "rate": source.pair_rate,
                "depolarization": source.depolarization,
            },
        },
    }


def write_capture(stream: IO[str], payloads) -> None:
    for payload in payloads:
        stream.write(dumps_wire(payload) + "\n")


def read_capture(stream: IO[str]) -> list[dict]:
    frames = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            frames.append(validate_wire_frame(json.loads(line)))
        except (json.JSONDecodeError, SchemaError) as exc:
            raise SchemaError(f"capture line {lineno}: {exc}") from exc
    return frames


# --- configuration document ---------------------------------------------------

CONFIG_VERSION = 1


def default_config() -> dict:
    """The full key-value document with every configurable field."""
    noise = NoiseModel()
    timing = TimingProfile()
    engine = EngineConfig()
    source = SourceState()
    return {
        "version": CONFIG_VERSION,
        "seed": 0,
        "noise": {
            "pair_rate": noise.pair_rate,
            "car": noise.car,
            "dark_rate": noise.dark_rate,
            "gate_rate": noise.gate_rate,
            "eta": noise.eta,
            "systematic_angle": noise.systematic_angle,
        },
        "timing": {
            "m": timing.m,
            "tau_m": timing.tau_m,
            "tau_s": timing.tau_s,
            "tau_a": timing.tau_a,
            "pair_rate": timing.pair_rate,
            "eta": timing.eta,
        },
        "engine": {
            "window_m": engine.window_m,
            "pacing": engine.pacing,
            "subtract_accidentals": engine.subtract_accidentals,
            "randomize_order": engine.randomize_order,
            "dark_rate": engine.dark_rate,
            "gate_rate": engine.gate_rate,
            "systematic_angle": engine.systematic_angle,
            "target": engine.target,
        },
        "source": {
            "theta": source.theta,
            "car": source.car,
            "pair_rate": source.pair_rate,
            "depolarization": source.depolarization,
        },
        "serve": {"host": "127.0.0.1", "port": 8765},
    }


def load_config(path: str | None) -> dict:
    """Load a config file over the defaults; sections may be partial."""
    config = default_config()
    if path is None:
        return config
    with open(path, encoding="utf-8") as fh:
        document = json.load(fh)
    if not isinstance(document, dict):
        raise ValueError("config document must be a JSON object")
    version = document.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ValueError(f"unsupported config version {version!r}")
    for key, value in document.items():
        if key in config and isinstance(config[key], dict):
            unknown = set(value) - set(config[key])
            if unknown:
                raise ValueError(f"unknown {key} keys: {', '.join(sorted(unknown))}")
            config[key].update(value)
        else:
            config[key] = value
    return config


def noise_from_config(config: dict) -> NoiseModel:
    return NoiseModel(**config["noise"])


def timing_from_config(config: dict) -> TimingProfile:
    return TimingProfile(**config["timing"])


def engine_from_config(config: dict) -> EngineConfig:
    return EngineConfig(timing=timing_from_config(config), seed=config.get("seed", 0), **config["engine"])


def source_from_config(config: dict) -> SourceState:
    return SourceState(**config["source"])
