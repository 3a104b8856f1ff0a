"""Latent tensor plumbing: seeded init, snapshot format, wire encoding.

A latent is a (channels, height, width) float32 numpy array.  The snapshot
format is a tiny self-describing binary: magic, version, dim count, u32 dims,
then the raw little-endian float32 payload in C order.
"""

from __future__ import annotations

import base64
import struct

import numpy as np

MAGIC = b"LTNS"
VERSION = 1


def seeded_latent(shape: tuple[int, ...], seed: int) -> np.ndarray:
    """Deterministic pseudo-random init shared by all diffusion paths."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape, dtype=np.float32)


def save_latent(latent: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(latent, dtype="<f4")
    header = struct.pack("<4sBB", MAGIC, VERSION, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + dims + arr.tobytes()


def load_latent(data: bytes) -> np.ndarray:
    if len(data) < 6 or data[:4] != MAGIC:
        raise ValueError("not a latent snapshot (bad magic)")
    version, ndim = struct.unpack_from("<BB", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported latent snapshot version {version}")
    dims = struct.unpack_from(f"<{ndim}I", data, 6)
    offset = 6 + 4 * ndim
    expected = int(np.prod(dims)) * 4
    payload = data[offset:]
    if len(payload) != expected:
        raise ValueError(f"latent payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def encode_payload(latent: np.ndarray) -> str:
    """Base64 of the raw little-endian float32 C-order payload (wire format)."""
    return base64.b64encode(np.ascontiguousarray(latent, dtype="<f4").tobytes()).decode("ascii")


def decode_payload(payload: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(payload)
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ValueError(f"payload is {len(raw)} bytes, expected {expected} for shape {shape}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
