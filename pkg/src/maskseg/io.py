"""Bit-exact file containers.

Three sibling formats share one scheme: a small JSON header next to a raw
little-endian payload with no padding.

* volume:      ``<name>.json`` + ``<name>.raw``; header carries ``dtype``
  in {u8, u32, u64, f32}, ``shape`` = [Z, Y, X] (mask fields append the
  window size D), ``order`` = "row-major-x-fastest", ``endianness`` =
  "little" and optionally ``resolution`` = [rz, ry, rx].
* graph:       ``<name>.graph.json`` + ``<name>.graph.raw``; the payload has
  one packed record per in-bounds edge in enumeration order:
  f32 mean, f32 variance, f32 evidence, u8 valid.
* codec:       ``<name>.codec.json`` + ``<name>.codec.raw``; f32 mean vector
  followed by the basis rows.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import (
    AffinityNeighborhood,
    Coord3,
    LabelVolume,
    MaskWindow,
    Scale,
    SignedGridGraph,
    edge_count,
    source_slices,
)
from .errors import (
    ContainerError,
    MalformedHeaderError,
    PayloadLengthError,
    UnsupportedDtypeError,
    ValidationError,
)

DTYPE_CODES = {
    "u8": np.dtype("<u1"),
    "u32": np.dtype("<u4"),
    "u64": np.dtype("<u8"),
    "f32": np.dtype("<f4"),
}

EDGE_RECORD = np.dtype(
    [("mean", "<f4"), ("variance", "<f4"), ("evidence", "<f4"), ("valid", "u1")]
)


def _dtype_code(dtype: np.dtype) -> str:
    for code, dt in DTYPE_CODES.items():
        if dt == dtype.newbyteorder("<"):
            return code
    raise UnsupportedDtypeError(f"dtype {dtype} has no container code")


def _paths(path: str | Path) -> tuple[Path, Path]:
    base = Path(path)
    if base.suffix == ".json":
        base = base.with_suffix("")
    return base.with_suffix(".json"), base.with_suffix(".raw")


def write_container(path: str | Path, array: np.ndarray, extra: dict | None = None) -> Path:
    """Write an N-d array as header + raw payload; returns the JSON path."""
    json_path, raw_path = _paths(path)
    code = _dtype_code(array.dtype)
    header = {
        "dtype": code,
        "shape": list(array.shape),
        "order": "row-major-x-fastest",
        "endianness": "little",
    }
    if extra:
        header.update(extra)
    payload = np.ascontiguousarray(array).astype(DTYPE_CODES[code], copy=False)
    json_path.write_text(json.dumps(header, indent=1) + "\n")
    raw_path.write_bytes(payload.tobytes())
    return json_path


def read_container(path: str | Path) -> tuple[np.ndarray, dict]:
    """Read header + payload back as (array, header dict)."""
    json_path, raw_path = _paths(path)
    if not json_path.exists():
        raise ContainerError(f"missing header file {json_path}")
    if not raw_path.exists():
        raise ContainerError(f"missing payload file {raw_path}")
    try:
        header = json.loads(json_path.read_text())
    except json.JSONDecodeError as e:
        raise MalformedHeaderError(f"{json_path}: invalid JSON ({e})") from e
    if not isinstance(header, dict):
        raise MalformedHeaderError(f"{json_path}: header must be a JSON object")
    for key in ("dtype", "shape", "order", "endianness"):
        if key not in header:
            raise MalformedHeaderError(f"{json_path}: missing header field {key!r}")
    if header["order"] != "row-major-x-fastest" or header["endianness"] != "little":
        raise MalformedHeaderError(f"{json_path}: unsupported order/endianness")
    code = header["dtype"]
    if code not in DTYPE_CODES:
        raise UnsupportedDtypeError(f"{json_path}: unsupported dtype {code!r}")
    shape = header["shape"]
    if (
        not isinstance(shape, list)
        or not shape
        or not all(isinstance(v, int) and v > 0 for v in shape)
    ):
        raise MalformedHeaderError(f"{json_path}: bad shape {shape!r}")
    dt = DTYPE_CODES[code]
    expected = int(np.prod(shape)) * dt.itemsize
    payload = raw_path.read_bytes()
    if len(payload) != expected:
        raise PayloadLengthError(
            f"{raw_path}: payload is {len(payload)} bytes, expected {expected}"
        )
    array = np.frombuffer(payload, dtype=dt).reshape(shape)
    return array, header


def write_volume(volume: LabelVolume, path: str | Path) -> Path:
    extra = {}
    if volume.resolution is not None:
        extra["resolution"] = list(volume.resolution)
    return write_container(path, volume.data, extra)


def read_volume(path: str | Path) -> LabelVolume:
    array, header = read_container(path)
    if array.ndim != 3:
        raise ValidationError(f"{path}: label volume must be 3D, got shape {array.shape}")
    if array.dtype.kind != "u":
        raise ValidationError(f"{path}: label volume requires an unsigned dtype, got {header['dtype']}")
    res = header.get("resolution")
    return LabelVolume(array, tuple(res) if res else None)


def write_mask_field(
    path: str | Path, field: np.ndarray, window: MaskWindow, scale: Scale
) -> Path:
    """Mask-field container: f32 array (Z, Y, X, D) with window flattened
    in (z, y, x) order; header carries window and scale z-first."""
    if field.ndim != 4 or field.shape[3] != window.size:
        raise ValidationError(f"mask field shape {field.shape} does not match window {tuple(window)}")
    extra = {"window": [window.kz, window.ky, window.kx], "scale": [scale.sz, scale.sy, scale.sx]}
    return write_container(path, field.astype(np.float32, copy=False), extra)


def read_mask_field(path: str | Path) -> tuple[np.ndarray, MaskWindow, Scale]:
    array, header = read_container(path)
    if header["dtype"] != "f32" or array.ndim != 4:
        raise ValidationError(f"{path}: mask field must be a 4D f32 container")
    if "window" not in header or "scale" not in header:
        raise MalformedHeaderError(f"{path}: mask field header requires window and scale")
    kz, ky, kx = header["window"]
    sz, sy, sx = header["scale"]
    window = MaskWindow(kx, ky, kz).validate()
    scale = Scale(sx, sy, sz).validate()
    if array.shape[3] != window.size:
        raise ValidationError(f"{path}: field depth {array.shape[3]} != window size {window.size}")
    if float(array.min()) < 0.0 or float(array.max()) > 1.0:
        raise ValidationError(f"{path}: mask values outside [0, 1]")
    return array, window, scale


def write_graph(graph: SignedGridGraph, path: str | Path) -> Path:
    """Serialize per-edge records in enumerate_edges order."""
    base = Path(path)
    if base.name.endswith(".graph.json"):
        base = base.with_name(base.name[: -len(".graph.json")])
    elif base.name.endswith(".graph"):
        base = base.with_name(base.name[: -len(".graph")])
    json_path = base.with_name(base.name + ".graph.json")
    raw_path = base.with_name(base.name + ".graph.raw")

    n_edges = edge_count(graph.shape_xyz, graph.neighborhood)
    records = np.zeros(n_edges, dtype=EDGE_RECORD)
    x, y, z = graph.shape_xyz
    pos = 0
    # Gather per offset, then reorder to voxel-major (z, y, x, k).
    u_parts, k_parts, starts = [], [], []
    for k, off in enumerate(graph.neighborhood.offsets):
        sl = source_slices(graph.shape_xyz, off)
        if sl is None:
            continue
        count = (
            (sl[0].stop - sl[0].start) * (sl[1].stop - sl[1].start) * (sl[2].stop - sl[2].start)
        )
        zz, yy, xx = np.meshgrid(
            np.arange(sl[0].start, sl[0].stop, dtype=np.int64),
            np.arange(sl[1].start, sl[1].stop, dtype=np.int64),
            np.arange(sl[2].start, sl[2].stop, dtype=np.int64),
            indexing="ij",
        )
        u_parts.append(((zz * y + yy) * x + xx).ravel())
        k_parts.append(np.full(count, k, dtype=np.int64))
        block = records[pos : pos + count]
        block["mean"] = graph.mean[k][sl].ravel()
        block["variance"] = graph.variance[k][sl].ravel()
        block["evidence"] = graph.evidence[k][sl].ravel()
        block["valid"] = graph.valid[k][sl].ravel()
        pos += count
    if pos != n_edges:
        raise ContainerError("edge count mismatch during graph export")
    if u_parts:
        u_flat = np.concatenate(u_parts)
        k_arr = np.concatenate(k_parts)
        order = np.lexsort((k_arr, u_flat))
        records = records[order]

    header = {
        "shape": [z, y, x],
        "offsets": [[o.x, o.y, o.z] for o in graph.neighborhood.offsets],
        "direct_count": graph.neighborhood.direct_count,
        "edge_count": n_edges,
        "order": "zyx-voxel-major-then-offset",
        "endianness": "little",
    }
    json_path.write_text(json.dumps(header, indent=1) + "\n")
    raw_path.write_bytes(records.tobytes())
    return json_path


def read_graph(path: str | Path) -> SignedGridGraph:
    base = Path(path)
    name = base.name
    for suffix in (".graph.json", ".graph.raw", ".graph"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
            break
    json_path = base.with_name(name + ".graph.json")
    raw_path = base.with_name(name + ".graph.raw")
    if not json_path.exists() or not raw_path.exists():
        raise ContainerError(f"missing graph container {json_path}")
    try:
        header = json.loads(json_path.read_text())
    except json.JSONDecodeError as e:
        raise MalformedHeaderError(f"{json_path}: invalid JSON ({e})") from e
    try:
        zf, yf, xf = header["shape"]
        offsets = tuple(Coord3(*o) for o in header["offsets"])
        neighborhood = AffinityNeighborhood(offsets, int(header["direct_count"]))
        n_edges = int(header["edge_count"])
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedHeaderError(f"{json_path}: bad graph header ({e})") from e
    shape_xyz = (xf, yf, zf)
    if n_edges != edge_count(shape_xyz, neighborhood):
        raise MalformedHeaderError(f"{json_path}: edge_count inconsistent with shape/offsets")
    payload = raw_path.read_bytes()
    if len(payload) != n_edges * EDGE_RECORD.itemsize:
        raise PayloadLengthError(
            f"{raw_path}: payload is {len(payload)} bytes, expected {n_edges * EDGE_RECORD.itemsize}"
        )
    records = np.frombuffer(payload, dtype=EDGE_RECORD)

    k_count = len(neighborhood)
    zyx = (zf, yf, xf)
    mean = np.zeros((k_count,) + zyx)
    variance = np.zeros((k_count,) + zyx)
    evidence = np.zeros((k_count,) + zyx)
    valid = np.zeros((k_count,) + zyx, dtype=bool)

    # Scatter back: reproduce the enumeration order to locate each record.
    u_parts, k_parts = [], []
    for k, off in enumerate(neighborhood.offsets):
        sl = source_slices(shape_xyz, off)
        if sl is None:
            continue
        zz, yy, xx = np.meshgrid(
            np.arange(sl[0].start, sl[0].stop, dtype=np.int64),
            np.arange(sl[1].start, sl[1].stop, dtype=np.int64),
            np.arange(sl[2].start, sl[2].stop, dtype=np.int64),
            indexing="ij",
        )
        u_parts.append(((zz * yf + yy) * xf + xx).ravel())
        k_parts.append(np.full(u_parts[-1].size, k, dtype=np.int64))
    if u_parts:
        u_flat = np.concatenate(u_parts)
        k_arr = np.concatenate(k_parts)
        order = np.lexsort((k_arr, u_flat))
        u_sorted, k_sorted = u_flat[order], k_arr[order]
        flat_idx = k_sorted * (zf * yf * xf) + u_sorted
        mean.ravel()[flat_idx] = records["mean"].astype(np.float64)
        variance.ravel()[flat_idx] = records["variance"].astype(np.float64)
        evidence.ravel()[flat_idx] = records["evidence"].astype(np.float64)
        valid.ravel()[flat_idx] = records["valid"] != 0
    graph = SignedGridGraph(shape_xyz, neighborhood, mean, variance, evidence, valid)
    return graph
