"""Byte layout of telemetry traces, in plain Python.

Header (32 bytes, little-endian): magic "GWAT", version u16, D u32, C u32,
N u64, b u32, K u32, flags u16. Each step record: epoch u32, step u32, n u32,
weight tag u8 (0 full, 1 same as previous), weight hash u64, then for a full
record C*D float32 weights (and C float32 bias when flagged), then n samples
of (id u64, D float32 latent, C float32 probs or logits, label u32).
"""

import struct

MAGIC = b"GWAT"
VERSION = 1
HEADER = struct.Struct("<4sHIIQIIH")
RECORD = struct.Struct("<IIIBQ")
BIAS_PRESENT = 1
PROBS_ARE_LOGITS = 2
FULL = 0
SAME_AS_PREVIOUS = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a(data, h=_FNV_OFFSET):
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def pack_header(dim, classes, dataset_size, batch_size, steps_per_epoch, flags=0):
    return HEADER.pack(MAGIC, VERSION, dim, classes, dataset_size, batch_size, steps_per_epoch, flags)


def unpack_header(data):
    magic, version, dim, classes, n, b, k, flags = HEADER.unpack_from(data)
    return {
        "magic": magic,
        "version": version,
        "dim": dim,
        "classes": classes,
        "dataset_size": n,
        "batch_size": b,
        "steps_per_epoch": k,
        "flags": flags,
    }


def _floats(values):
    values = [float(v) for v in values]
    return struct.pack("<%df" % len(values), *values)


def pack_step(epoch, step, weights, bias, samples, previous_hash=None):
    """Encode one step. `weights` is a flat row-major C*D list, `bias` a list
    or None, `samples` a list of (id, latent, probs, label). Returns
    (bytes, weight_hash)."""
    weight_bytes = _floats(weights)
    bias_bytes = _floats(bias) if bias is not None else b""
    h = fnv1a(bias_bytes, fnv1a(weight_bytes))
    tag = SAME_AS_PREVIOUS if previous_hash == h else FULL
    out = [RECORD.pack(epoch, step, len(samples), tag, h)]
    if tag == FULL:
        out.append(weight_bytes)
        out.append(bias_bytes)
    for sample_id, latent, probs, label in samples:
        out.append(struct.pack("<Q", sample_id))
        out.append(_floats(latent))
        out.append(_floats(probs))
        out.append(struct.pack("<I", label))
    return b"".join(out), h
