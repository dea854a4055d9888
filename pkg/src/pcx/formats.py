"""File formats: PLY scenes, binary sidecars, manifests, provenance.

Scenes travel as PLY (ASCII or binary little-endian) with double
precision coordinates so write-then-read returns bit-identical payloads.
Masks, cluster ids, label arrays, and feature matrices use a 16-byte
header (magic, kind tag, two uint32 dims) followed by a little-endian
payload. Every write lands atomically via a temp file and rename.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ._version import VERSION
from .errors import (
    IoFailure,
    MalformedHeader,
    ManifestError,
    MissingRequiredProperty,
    UnsupportedEncoding,
)
from .geometry import PointCloud

MAGIC = b"PCX1"
KIND_MASK = b"MASK"
KIND_CLUSTERS = b"CLUS"
KIND_LABELS = b"LBLS"
KIND_FEATURES = b"FEAT"

_HEADER = struct.Struct("<4s4sII")

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    """Write data to path so readers never observe a partial file."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_json(obj, path: Union[str, Path]) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    atomic_write_bytes(path, text.encode("utf-8"))


def read_json(path: Union[str, Path]):
    try:
        with open(path, "rb") as handle:
            return json.loads(handle.read().decode("utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise MalformedHeader(f"{path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# PLY


def _ply_header(cloud: PointCloud, encoding: str) -> str:
    lines = [
        "ply",
        f"format {encoding} 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
    ]
    if cloud.normals is not None:
        lines += ["property double nx", "property double ny", "property double nz"]
    if cloud.labels is not None:
        lines.append("property int label")
    if cloud.clusters is not None:
        lines.append("property int cluster")
    lines.append("end_header")
    return "\n".join(lines) + "\n"


def _vertex_dtype(cloud: PointCloud) -> np.dtype:
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
              ("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if cloud.normals is not None:
        fields += [("nx", "<f8"), ("ny", "<f8"), ("nz", "<f8")]
    if cloud.labels is not None:
        fields.append(("label", "<i4"))
    if cloud.clusters is not None:
        fields.append(("cluster", "<i4"))
    return np.dtype(fields)


def write_ply(cloud: PointCloud, path: Union[str, Path],
              encoding: str = "binary_little_endian") -> None:
    """Serialize a scene; coordinates keep full double precision."""
    if encoding not in ("ascii", "binary_little_endian"):
        raise ValueError(f"unsupported encoding {encoding!r}")
    header = _ply_header(cloud, encoding)
    rows = np.empty(len(cloud), dtype=_vertex_dtype(cloud))
    rows["x"], rows["y"], rows["z"] = cloud.positions.T
    rows["red"], rows["green"], rows["blue"] = cloud.colors.T
    if cloud.normals is not None:
        rows["nx"], rows["ny"], rows["nz"] = cloud.normals.T
    if cloud.labels is not None:
        rows["label"] = cloud.labels
    if cloud.clusters is not None:
        rows["cluster"] = cloud.clusters

    if encoding == "binary_little_endian":
        atomic_write_bytes(path, header.encode("ascii") + rows.tobytes())
        return
    out = [header]
    names = rows.dtype.names
    for row in rows:
        cells = []
        for name in names:
            value = row[name]
            if rows.dtype[name].kind == "f":
                cells.append(repr(float(value)))
            else:
                cells.append(str(int(value)))
        out.append(" ".join(cells) + "\n")
    atomic_write_bytes(path, "".join(out).encode("ascii"))


def _parse_ply_header(blob: bytes, path) -> tuple[str, int, list, int]:
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise MalformedHeader(f"{path}: not a PLY file")
    body_start = end + len(b"end_header\n")
    lines = blob[:end].decode("ascii", errors="replace").splitlines()

    encoding = None
    elements = []  # (name, count, [(prop_name, ply_type)])
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if len(parts) != 3:
                raise MalformedHeader(f"{path}: bad format line")
            if parts[1] == "binary_big_endian":
                raise UnsupportedEncoding(f"{path}: big-endian PLY not supported")
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise MalformedHeader(f"{path}: unknown format {parts[1]!r}")
            encoding = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise MalformedHeader(f"{path}: bad element line")
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MalformedHeader(f"{path}: property before any element")
            if parts[1] == "list":
                raise MalformedHeader(f"{path}: list properties not supported")
            if len(parts) != 3 or parts[1] not in _PLY_DTYPES:
                raise MalformedHeader(f"{path}: bad property line {line!r}")
            elements[-1][2].append((parts[2], parts[1]))
        else:
            raise MalformedHeader(f"{path}: unrecognized header line {line!r}")
    if encoding is None:
        raise MalformedHeader(f"{path}: missing format line")
    if not elements or elements[0][0] != "vertex":
        raise MalformedHeader(f"{path}: first element must be vertex")
    count = elements[0][1]
    props = elements[0][2]
    if not props:
        raise MalformedHeader(f"{path}: vertex element has no properties")
    return encoding, count, props, body_start


def read_ply(path: Union[str, Path]) -> PointCloud:
    """Load a scene written by write_ply or compatible tools.

    x, y, z and red, green, blue are required; nx, ny, nz (all three),
    label, and cluster are picked up when present. Properties this reader
    does not know are skipped. Elements after the vertex block (faces and
    the like) are ignored.
    """
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    encoding, count, props, body_start = _parse_ply_header(blob, path)
    dtype = np.dtype([(name, "<" + _PLY_DTYPES[ply_type]) for name, ply_type in props])
    if len(set(dtype.names)) != len(dtype.names):
        raise MalformedHeader(f"{path}: duplicate property names")

    if encoding == "binary_little_endian":
        body = blob[body_start:]
        if len(body) < count * dtype.itemsize:
            raise MalformedHeader(f"{path}: vertex payload truncated")
        rows = np.frombuffer(body, dtype=dtype, count=count)
    else:
        text = blob[body_start:].decode("ascii", errors="replace")
        lines = [ln for ln in text.splitlines() if ln.strip()][:count]
        if len(lines) < count:
            raise MalformedHeader(f"{path}: vertex payload truncated")
        rows = np.empty(count, dtype=dtype)
        for r, line in enumerate(lines):
            cells = line.split()
            if len(cells) != len(props):
                raise MalformedHeader(f"{path}: vertex row {r} malformed")
            for (name, _), cell in zip(props, cells):
                try:
                    kind = dtype[name].kind
                    rows[r][name] = float(cell) if kind == "f" else int(cell)
                except ValueError as exc:
                    raise MalformedHeader(
                        f"{path}: bad value {cell!r} in row {r}") from exc

    have = set(dtype.names)
    for req in ("x", "y", "z", "red", "green", "blue"):
        if req not in have:
            raise MissingRequiredProperty(f"{path}: missing property {req!r}")
    normal_names = ("nx", "ny", "nz")
    n_normals = sum(1 for n in normal_names if n in have)
    if n_normals not in (0, 3):
        raise MissingRequiredProperty(f"{path}: nx, ny, nz must appear together")

    positions = np.stack(
        [rows["x"], rows["y"], rows["z"]], axis=1).astype(np.float64)
    colors = np.stack(
        [rows["red"], rows["green"], rows["blue"]], axis=1).astype(np.uint8)
    normals = None
    if n_normals == 3:
        normals = np.stack(
            [rows["nx"], rows["ny"], rows["nz"]], axis=1).astype(np.float64)
    labels = rows["label"].astype(np.int32) if "label" in have else None
    clusters = rows["cluster"].astype(np.int32) if "cluster" in have else None
    return PointCloud(positions=positions, colors=colors, normals=normals,
                      labels=labels, clusters=clusters,
                      scene_id=Path(path).stem)


def ply_encoding(path: Union[str, Path]) -> str:
    """Peek a PLY header: 'ascii' or 'binary_little_endian'."""
    try:
        with open(path, "rb") as handle:
            blob = handle.read(4096)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    for line in blob.split(b"\n"):
        if line.startswith(b"format "):
            parts = line.decode("ascii", errors="replace").split()
            if len(parts) >= 2 and parts[1] == "binary_big_endian":
                raise UnsupportedEncoding(f"{path}: big-endian PLY not supported")
            if len(parts) >= 2 and parts[1] in ("ascii", "binary_little_endian"):
                return parts[1]
            break
    raise MalformedHeader(f"{path}: missing or bad format line")


# ---------------------------------------------------------------------------
# Binary sidecars


def _write_sidecar(kind: bytes, payload: np.ndarray, a: int, b: int,
                   path: Union[str, Path]) -> None:
    atomic_write_bytes(path, _HEADER.pack(MAGIC, kind, a, b) + payload.tobytes())


def _read_sidecar(path: Union[str, Path], expect_kind: bytes,
                  dtype: str) -> tuple[np.ndarray, int, int]:
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise MalformedHeader(f"{path}: file shorter than the header")
    magic, kind, a, b = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise MalformedHeader(f"{path}: bad magic {magic!r}")
    if kind != expect_kind:
        raise MalformedHeader(
            f"{path}: expected kind {expect_kind.decode()!r}, found {kind.decode()!r}")
    payload = blob[_HEADER.size:]
    expected = a * b * np.dtype(dtype).itemsize
    if len(payload) != expected:
        raise MalformedHeader(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype=dtype), a, b


def write_masks(mask: np.ndarray, path: Union[str, Path]) -> None:
    """Relocation mask as int32 zeros and ones."""
    mask = np.asarray(mask, dtype=bool)
    _write_sidecar(KIND_MASK, mask.astype("<i4"), len(mask), 1, path)


def read_masks(path: Union[str, Path]) -> np.ndarray:
    data, _, _ = _read_sidecar(path, KIND_MASK, "<i4")
    return data != 0


def write_clusters(cluster_of: np.ndarray, path: Union[str, Path]) -> None:
    cluster_of = np.asarray(getattr(cluster_of, "cluster_of", cluster_of))
    _write_sidecar(KIND_CLUSTERS, cluster_of.astype("<i4"), len(cluster_of), 1, path)


def read_clusters(path: Union[str, Path]) -> np.ndarray:
    data, _, _ = _read_sidecar(path, KIND_CLUSTERS, "<i4")
    return data.astype(np.int32)


def write_labels(labels: np.ndarray, path: Union[str, Path]) -> None:
    labels = np.asarray(labels)
    _write_sidecar(KIND_LABELS, labels.astype("<i4"), len(labels), 1, path)


def read_labels(path: Union[str, Path]) -> np.ndarray:
    data, _, _ = _read_sidecar(path, KIND_LABELS, "<i4")
    return data.astype(np.int32)


def write_features(features: np.ndarray, path: Union[str, Path]) -> None:
    """Feature matrix as float32 rows; the header records (N, d)."""
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    n, d = features.shape
    _write_sidecar(KIND_FEATURES, features.astype("<f4").ravel(), n, d, path)


def read_features(path: Union[str, Path]) -> np.ndarray:
    data, n, d = _read_sidecar(path, KIND_FEATURES, "<f4")
    return data.reshape(n, d).astype(np.float32)


def write_provenance(path: Union[str, Path], seed: int, config_hash: str) -> None:
    """Run metadata next to an output, enough to reproduce it exactly."""
    write_json(
        {"seed": int(seed), "config_hash": config_hash, "tool_version": VERSION},
        path,
    )


# ---------------------------------------------------------------------------
# Manifests


@dataclass(frozen=True)
class ManifestEntry:
    scene_id: str
    cloud: Path
    segmentation: Optional[Path] = None
    features: Optional[Path] = None


@dataclass(frozen=True)
class DatasetManifest:
    """Index of a dataset on disk: one cloud file per scene id."""

    root: Path
    scenes: tuple
    version: str

    def __len__(self) -> int:
        return len(self.scenes)


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    """Parse and validate a dataset manifest.

    scene_ids must be unique and every referenced file must exist;
    relative paths resolve against the manifest's ``root``, itself
    resolved against the manifest file's directory.
    """
    path = Path(path)
    raw = read_json(path)
    if not isinstance(raw, dict) or "scenes" not in raw:
        raise ManifestError(f"{path}: manifest must be an object with 'scenes'")
    version = str(raw.get("version", "1"))
    root = Path(raw.get("root", "."))
    if not root.is_absolute():
        root = path.parent / root

    entries = []
    seen = set()
    for i, item in enumerate(raw["scenes"]):
        if not isinstance(item, dict) or "scene_id" not in item or "cloud" not in item:
            raise ManifestError(f"{path}: scene {i} needs scene_id and cloud")
        sid = str(item["scene_id"])
        if sid in seen:
            raise ManifestError(f"{path}: duplicate scene_id {sid!r}")
        seen.add(sid)

        def resolve(key):
            value = item.get(key)
            if value is None:
                return None
            p = Path(value)
            if not p.is_absolute():
                p = root / p
            if not p.exists():
                raise ManifestError(f"{path}: {key} file {p} does not exist")
            return p

        entries.append(ManifestEntry(
            scene_id=sid,
            cloud=resolve("cloud"),
            segmentation=resolve("segmentation"),
            features=resolve("features"),
        ))
    return DatasetManifest(root=root, scenes=tuple(entries), version=version)


def save_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> None:
    scenes = []
    for entry in manifest.scenes:
        item = {"scene_id": entry.scene_id, "cloud": str(entry.cloud)}
        if entry.segmentation is not None:
            item["segmentation"] = str(entry.segmentation)
        if entry.features is not None:
            item["features"] = str(entry.features)
        scenes.append(item)
    write_json({"version": manifest.version, "root": str(manifest.root),
                "scenes": scenes}, path)
