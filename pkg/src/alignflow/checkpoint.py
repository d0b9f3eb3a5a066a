"""Binary checkpoints holding a model and both critics.

Layout (all integers little-endian)::

    8 bytes   magic  b"AFLOWCK1"
    u32       format version
    u64       metadata length in bytes
    ...       metadata, UTF-8 JSON (sorted keys, compact separators)
    u64       parameter count
    f64 * n   parameter values in construction order

Construction order is: generator parameters (flow A, then the parts of
flow B not shared with A), then critic A, then critic B. The metadata
carries everything needed to rebuild the same structure.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .flows import ActNorm, FlowSpec
from .model import AlignFlowModel, SharingSpec
from .training import make_critics

MAGIC = b"AFLOWCK1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _actnorms(model):
    seen, out = set(), []
    for flow in (model.flow_a, model.flow_b):
        for layer in flow.layers:
            if isinstance(layer, ActNorm) and id(layer) not in seen:
                seen.add(id(layer))
                out.append(layer)
    return out


def all_parameters(model, critic_a, critic_b):
    return model.parameters() + critic_a.parameters() + critic_b.parameters()


def to_bytes(model, critic_a, critic_b, meta: dict) -> bytes:
    meta = dict(meta)
    meta["actnorm_initialized"] = [bool(l.initialized) for l in _actnorms(model)]
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = all_parameters(model, critic_a, critic_b)
    flat = np.concatenate([p.data.ravel() for p in params]) if params else np.zeros(0)
    return b"".join([
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<Q", len(blob)),
        blob,
        struct.pack("<Q", flat.size),
        flat.astype("<f8").tobytes(),
    ])


def from_bytes(raw: bytes):
    """Rebuild ``(model, critic_a, critic_b, metadata)`` from :func:`to_bytes` output."""
    if raw[:8] != MAGIC:
        raise CheckpointError("not an AlignFlow checkpoint (bad magic)")
    try:
        (version,) = struct.unpack_from("<I", raw, 8)
        (mlen,) = struct.unpack_from("<Q", raw, 12)
        meta = json.loads(raw[20:20 + mlen].decode("utf-8"))
        (count,) = struct.unpack_from("<Q", raw, 20 + mlen)
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from None
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = 28 + mlen
    if len(raw) != start + 8 * count:
        raise CheckpointError(f"expected {count} parameters, file holds {(len(raw) - start) / 8:g}")
    flat = np.frombuffer(raw, dtype="<f8", count=count, offset=start).astype(np.float64)

    model, critic_a, critic_b = build_from_metadata(meta)
    params = all_parameters(model, critic_a, critic_b)
    expected = sum(p.data.size for p in params)
    if expected != count:
        raise CheckpointError(f"metadata describes {expected} parameters, header says {count}")
    pos = 0
    for p in params:
        n = p.data.size
        p.data = flat[pos:pos + n].reshape(p.data.shape).copy()
        pos += n
    flags = meta.get("actnorm_initialized", [])
    for layer, flag in zip(_actnorms(model), flags):
        layer.initialized = bool(flag)
    return model, critic_a, critic_b, meta


def build_from_metadata(meta: dict):
    try:
        spec = FlowSpec(**meta["architecture"])
        sharing = SharingSpec(**meta.get("sharing", {}))
        seed = int(meta["model_seed"])
        critic = meta.get("critic", {})
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"checkpoint metadata incomplete: {e}") from None
    model = AlignFlowModel.build(spec, sharing, seed=seed)
    critic_a, critic_b = make_critics(spec.dim, seed, critic.get("hidden", 64), critic.get("n_hidden", 3))
    return model, critic_a, critic_b


def save_checkpoint(path, model, critic_a, critic_b, meta: dict) -> bytes:
    raw = to_bytes(model, critic_a, critic_b, meta)
    with open(path, "wb") as f:
        f.write(raw)
    return raw


def load_checkpoint(path):
    with open(path, "rb") as f:
        return from_bytes(f.read())
