"""Bit-exact binary persistence for fields, maps, chains, trajectories, and
fitted lifters.

One container format (extension ``.dflo``): a fixed little-endian header
followed by raw float64 payload bytes, so save/load round trips reproduce
every array bit for bit.

Header layout (struct ``<4sIBQQIQ``, 37 bytes):
    magic    4s   b"DFLO"
    version  u32  1
    kind     u8   1 field, 2 map, 3 chain, 4 trajectory, 5 lifter
    nx       u64
    ny       u64
    aux      u32  channels (field), planes = 8 (map/chain), 0 otherwise
    length   u64  payload byte count

Kind-specific payloads:
    field       channels * ny * nx float64, C order
    map         planes (2, 4, ny, nx) flattened in C order: for each
                component the (value, d/dx, d/dy, d2/dxdy) planes
    chain       u64 map count, then each map's planes
    trajectory  u64 JSON length, UTF-8 JSON metadata block, frame data,
                optional submaps (as a chain payload), optional velocity
                frames
    lifter      u64 JSON length, UTF-8 JSON parameter block, weight matrix
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .diffeo import DiffeoMap, MapChain
from .grid import Grid, PeriodicField
from .solvers import Trajectory

MAGIC = b"DFLO"
VERSION = 1
HEADER = struct.Struct("<4sIBQQIQ")

KIND_FIELD = 1
KIND_MAP = 2
KIND_CHAIN = 3
KIND_TRAJECTORY = 4
KIND_LIFTER = 5

_KIND_NAMES = {
    KIND_FIELD: "field",
    KIND_MAP: "map",
    KIND_CHAIN: "chain",
    KIND_TRAJECTORY: "trajectory",
    KIND_LIFTER: "lifter",
}


class StoreFormatError(ValueError):
    """Raised on malformed archives: bad magic, version, kind, or truncation."""


def _write(path, kind, grid, aux, payload: bytes):
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, kind, grid.nx, grid.ny, aux, len(payload)))
        fh.write(payload)


def _read(path, expected_kind=None):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise StoreFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, kind, nx, ny, aux, length = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise StoreFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    if kind not in _KIND_NAMES:
        raise StoreFormatError(f"{path}: unknown kind {kind}")
    if expected_kind is not None and kind != expected_kind:
        raise StoreFormatError(
            f"{path}: contains a {_KIND_NAMES[kind]}, "
            f"expected a {_KIND_NAMES[expected_kind]}"
        )
    payload = raw[HEADER.size :]
    if len(payload) != length:
        raise StoreFormatError(
            f"{path}: payload is {len(payload)} bytes, header says {length}"
        )
    return kind, Grid(int(nx), int(ny)), int(aux), payload


def _floats(buf, count, what):
    need = count * 8
    if len(buf) < need:
        raise StoreFormatError(f"truncated {what}: {len(buf)} bytes, need {need}")
    return np.frombuffer(buf[:need], dtype="<f8").copy(), buf[need:]


def _u64(buf, what):
    if len(buf) < 8:
        raise StoreFormatError(f"truncated {what} count")
    return struct.unpack_from("<Q", buf)[0], buf[8:]


# ---------------------------------------------------------------------------
# fields


def save_field(f: PeriodicField, path):
    _write(
        path,
        KIND_FIELD,
        f.grid,
        f.channels,
        np.ascontiguousarray(f.data, dtype="<f8").tobytes(),
    )


def load_field(path) -> PeriodicField:
    _, grid, channels, payload = _read(path, KIND_FIELD)
    data, rest = _floats(payload, channels * grid.ny * grid.nx, "field data")
    if rest:
        raise StoreFormatError(f"{path}: {len(rest)} trailing bytes")
    return PeriodicField(grid, data.reshape(channels, grid.ny, grid.nx))


# ---------------------------------------------------------------------------
# maps and chains


def _map_bytes(m: DiffeoMap) -> bytes:
    return np.ascontiguousarray(m.planes, dtype="<f8").tobytes()


def _map_from(buf, grid, what="map planes"):
    data, rest = _floats(buf, 8 * grid.ny * grid.nx, what)
    return DiffeoMap(grid, data.reshape(2, 4, grid.ny, grid.nx)), rest


def save_map(m: DiffeoMap, path):
    _write(path, KIND_MAP, m.grid, 8, _map_bytes(m))


def load_map(path) -> DiffeoMap:
    _, grid, _, payload = _read(path, KIND_MAP)
    m, rest = _map_from(payload, grid)
    if rest:
        raise StoreFormatError(f"{path}: {len(rest)} trailing bytes")
    return m


def _chain_bytes(chain: MapChain) -> bytes:
    parts = [struct.pack("<Q", len(chain))]
    parts.extend(_map_bytes(m) for m in chain)
    return b"".join(parts)


def _chain_from(buf, grid):
    count, buf = _u64(buf, "chain map")
    maps = []
    for i in range(count):
        m, buf = _map_from(buf, grid, f"chain map {i}")
        maps.append(m)
    return MapChain(grid, maps), buf


def save_chain(chain: MapChain, path):
    _write(path, KIND_CHAIN, chain.grid, 8, _chain_bytes(chain))


def load_chain(path) -> MapChain:
    _, grid, _, payload = _read(path, KIND_CHAIN)
    chain, rest = _chain_from(payload, grid)
    if rest:
        raise StoreFormatError(f"{path}: {len(rest)} trailing bytes")
    return chain


# ---------------------------------------------------------------------------
# trajectories


def save_trajectory(tr: Trajectory, path):
    channels = tr.frames[0].channels if tr.frames else 1
    meta = {
        "dt_save": tr.dt_save,
        "n_frames": tr.n_frames,
        "channels": channels,
        "has_submaps": tr.submaps is not None,
        "n_velocity_frames": (
            len(tr.velocity_frames) if tr.velocity_frames is not None else 0
        ),
        "metadata": tr.metadata,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<Q", len(blob)), blob]
    for f in tr.frames:
        parts.append(np.ascontiguousarray(f.data, dtype="<f8").tobytes())
    if tr.submaps is not None:
        parts.append(_chain_bytes(MapChain(tr.grid, tr.submaps)))
    if tr.velocity_frames is not None:
        for f in tr.velocity_frames:
            parts.append(np.ascontiguousarray(f.data, dtype="<f8").tobytes())
    _write(path, KIND_TRAJECTORY, tr.grid, 0, b"".join(parts))


def load_trajectory(path) -> Trajectory:
    _, grid, _, payload = _read(path, KIND_TRAJECTORY)
    jlen, payload = _u64(payload, "metadata")
    if len(payload) < jlen:
        raise StoreFormatError(f"{path}: truncated metadata block")
    try:
        meta = json.loads(payload[:jlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StoreFormatError(f"{path}: corrupt metadata block: {exc}") from exc
    payload = payload[jlen:]
    channels = int(meta["channels"])
    frames = []
    for i in range(int(meta["n_frames"])):
        data, payload = _floats(payload, channels * grid.ny * grid.nx, f"frame {i}")
        frames.append(PeriodicField(grid, data.reshape(channels, grid.ny, grid.nx)))
    submaps = None
    if meta["has_submaps"]:
        chain, payload = _chain_from(payload, grid)
        submaps = chain.maps
    velocity_frames = None
    n_vel = int(meta.get("n_velocity_frames", 0))
    if n_vel:
        velocity_frames = []
        for i in range(n_vel):
            data, payload = _floats(payload, 2 * grid.ny * grid.nx, f"velocity frame {i}")
            velocity_frames.append(PeriodicField(grid, data.reshape(2, grid.ny, grid.nx)))
    if payload:
        raise StoreFormatError(f"{path}: {len(payload)} trailing bytes")
    return Trajectory(
        grid,
        float(meta["dt_save"]),
        frames,
        submaps=submaps,
        velocity_frames=velocity_frames,
        metadata=meta.get("metadata", {}),
    )


# ---------------------------------------------------------------------------
# fitted lifters


def save_lifter(lifter, path):
    from .lifting import SpectralLifter

    if not isinstance(lifter, SpectralLifter):
        raise TypeError("only spectral lifters are serializable")
    meta = {
        "window": lifter.window,
        "k_feat": lifter.k_feat,
        "ridge": lifter.ridge,
        "n_features": lifter.n_features,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = (
        struct.pack("<Q", len(blob))
        + blob
        + np.ascontiguousarray(lifter.weights, dtype="<f8").tobytes()
    )
    _write(path, KIND_LIFTER, lifter.grid, 0, payload)


def load_lifter(path):
    from .lifting import SpectralLifter

    _, grid, _, payload = _read(path, KIND_LIFTER)
    jlen, payload = _u64(payload, "metadata")
    if len(payload) < jlen:
        raise StoreFormatError(f"{path}: truncated metadata block")
    try:
        meta = json.loads(payload[:jlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StoreFormatError(f"{path}: corrupt metadata block: {exc}") from exc
    payload = payload[jlen:]
    n_feat = int(meta["n_features"])
    weights, rest = _floats(payload, 8 * grid.nx * grid.ny * n_feat, "weights")
    if rest:
        raise StoreFormatError(f"{path}: {len(rest)} trailing bytes")
    return SpectralLifter(
        grid,
        int(meta["window"]),
        int(meta["k_feat"]),
        float(meta["ridge"]),
        weights.reshape(8 * grid.nx * grid.ny, n_feat),
    )


# ---------------------------------------------------------------------------
# generic entry points


def load(path):
    """Open any archive and dispatch on its kind."""
    kind, _, _, _ = _read(path)
    loader = {
        KIND_FIELD: load_field,
        KIND_MAP: load_map,
        KIND_CHAIN: load_chain,
        KIND_TRAJECTORY: load_trajectory,
        KIND_LIFTER: load_lifter,
    }[kind]
    return loader(path)


def save(obj, path):
    """Dispatch on the object type."""
    from .lifting import SpectralLifter

    if isinstance(obj, PeriodicField):
        save_field(obj, path)
    elif isinstance(obj, DiffeoMap):
        save_map(obj, path)
    elif isinstance(obj, MapChain):
        save_chain(obj, path)
    elif isinstance(obj, Trajectory):
        save_trajectory(obj, path)
    elif isinstance(obj, SpectralLifter):
        save_lifter(obj, path)
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")
