"""File formats: FGMAP1 feature maps, FPCL1 point clouds, camera rigs and CSV outputs.

FGMAP1: 8-byte magic ``b"FGMAP1\\0\\0"``, little-endian u32 height, width,
channels, then ``h*w*c`` float32 in (row, col, channel) order.

FPCL1: 8-byte magic ``b"FPCL1\\0\\0\\0"``, little-endian u32 count, then
``count*3`` float32 (x, y, z).
"""
from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .config import parse_key_values
from .projection import CameraModel, FeatureMap, PointCloud

FGMAP_MAGIC = b"FGMAP1\0\0"
FPCL_MAGIC = b"FPCL1\0\0\0"


class FormatError(ValueError):
    pass


def feature_map_to_bytes(fmap: FeatureMap) -> bytes:
    h, w, c = fmap.data.shape
    return FGMAP_MAGIC + struct.pack("<3I", h, w, c) + fmap.data.astype("<f4").tobytes()


def feature_map_from_bytes(buf: bytes) -> FeatureMap:
    if buf[:8] != FGMAP_MAGIC:
        raise FormatError("not an FGMAP1 file")
    h, w, c = struct.unpack_from("<3I", buf, 8)
    body = np.frombuffer(buf, dtype="<f4", offset=20)
    if body.size != h * w * c:
        raise FormatError(f"FGMAP1 payload has {body.size} values, header says {h * w * c}")
    return FeatureMap(body.reshape(h, w, c).astype(float))


def write_feature_map(path, fmap: FeatureMap) -> None:
    Path(path).write_bytes(feature_map_to_bytes(fmap))


def read_feature_map(path) -> FeatureMap:
    return feature_map_from_bytes(Path(path).read_bytes())


def point_cloud_to_bytes(cloud: PointCloud) -> bytes:
    return FPCL_MAGIC + struct.pack("<I", len(cloud)) + cloud.points.astype("<f4").tobytes()


def point_cloud_from_bytes(buf: bytes) -> PointCloud:
    if buf[:8] != FPCL_MAGIC:
        raise FormatError("not an FPCL1 file")
    (n,) = struct.unpack_from("<I", buf, 8)
    body = np.frombuffer(buf, dtype="<f4", offset=12)
    if body.size != 3 * n:
        raise FormatError(f"FPCL1 payload has {body.size} values, header says {3 * n}")
    return PointCloud(body.reshape(n, 3).astype(float))


def write_point_cloud(path, cloud: PointCloud) -> None:
    Path(path).write_bytes(point_cloud_to_bytes(cloud))


def read_point_cloud(path) -> PointCloud:
    return point_cloud_from_bytes(Path(path).read_bytes())


def parse_rig(text: str) -> list[CameraModel]:
    """Parse a camera rig from ``camera.<i>.<key> = value`` lines.

    Each camera needs ``fx, fy, width, height`` and either ``extrinsics``
    (16 comma-separated numbers, row-major vehicle->camera) or ``yaw, pitch,
    position`` (degrees, degrees, ``x,y,z`` meters). ``cx, cy`` default to the
    image center.
    """
    entries: dict[int, dict[str, str]] = {}
    for key, value in parse_key_values(text).items():
        parts = key.split(".")
        if len(parts) != 3 or parts[0] != "camera" or not parts[1].isdigit():
            raise FormatError(f"unexpected rig key {key!r}")
        entries.setdefault(int(parts[1]), {})[parts[2]] = value
    if not entries:
        raise FormatError("rig defines no cameras")
    cams = []
    for i in sorted(entries):
        e = entries[i]
        try:
            fx, fy = float(e["fx"]), float(e["fy"])
            width, height = int(e["width"]), int(e["height"])
        except KeyError as err:
            raise FormatError(f"camera {i} is missing {err.args[0]}") from None
        cx = float(e["cx"]) if "cx" in e else None
        cy = float(e["cy"]) if "cy" in e else None
        if "extrinsics" in e:
            ext = np.array([float(v) for v in e["extrinsics"].split(",")]).reshape(4, 4)
            cams.append(
                CameraModel(fx, fy, (width - 1) / 2 if cx is None else cx,
                            (height - 1) / 2 if cy is None else cy, width, height, ext)
            )
        else:
            pos = [float(v) for v in e.get("position", "0,0,0").split(",")]
            cams.append(
                CameraModel.looking(
                    np.radians(float(e.get("yaw", 0))), np.radians(float(e.get("pitch", 0))),
                    pos, fx, fy, width, height, cx, cy,
                )
            )
    return cams


def format_rig(cams) -> str:
    lines = []
    for i, cam in enumerate(cams):
        ext = ",".join(repr(float(v)) for v in cam.extrinsics.ravel())
        for key, value in [("fx", cam.fx), ("fy", cam.fy), ("cx", cam.cx), ("cy", cam.cy),
                           ("width", cam.width), ("height", cam.height), ("extrinsics", ext)]:
            lines.append(f"camera.{i}.{key} = {value}")
    return "\n".join(lines) + "\n"


def read_rig(path) -> list[CameraModel]:
    return parse_rig(Path(path).read_text(encoding="utf-8"))


TRAJECTORY_HEADER = ["timestamp", "x", "y", "yaw", "cov_xx", "cov_yy", "cov_pp"]
VOLUME_HEADER = ["rotation_deg", "dx_px", "dy_px", "score", "overlap"]


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def trajectory_csv(rows) -> str:
    """Rows are ``(t, x, y, yaw, cov_xx, cov_yy, cov_pp)``; floats use ``repr``."""
    return _csv_text(TRAJECTORY_HEADER, ([repr(float(v)) for v in row] for row in rows))


def write_trajectory_csv(path, rows) -> None:
    Path(path).write_text(trajectory_csv(rows), encoding="utf-8")


def read_trajectory_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRAJECTORY_HEADER:
            raise FormatError(f"unexpected trajectory header {header}")
        return np.array([[float(v) for v in row] for row in reader]).reshape(-1, len(header))


def volume_csv(volume) -> str:
    """Dump every valid hypothesis of a ConfidenceVolume."""
    rows = []
    for r, angle in enumerate(volume.rotations):
        for i, dy in enumerate(volume.dys):
            for j, dx in enumerate(volume.dxs):
                if volume.valid[r, i, j]:
                    rows.append([repr(float(np.degrees(angle))), int(dx), int(dy),
                                 repr(float(volume.scores[r, i, j])), int(volume.overlap[r, i, j])])
    return _csv_text(VOLUME_HEADER, rows)
