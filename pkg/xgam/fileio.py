# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Point cloud files.

``xyz-ascii``: one point per line, whitespace separated decimal fields, the
first three are coordinates and the rest feature channels; lines starting
with ``#`` are comments.

``pcf-binary``: magic ``PCF1``, little-endian u32 N, little-endian u32 C,
then N * (3 + C) little-endian float32 values, row-major.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    InconsistentColumns,
    InvalidInput,
    ParseError,
    PointCloud,
    validate_cloud,
)

log = logging.getLogger(__name__)

XYZ_ASCII = "xyz-ascii"
PCF_BINARY = "pcf-binary"
FORMATS = (XYZ_ASCII, PCF_BINARY)

PCF_MAGIC = b"PCF1"
_PCF_HEADER = np.dtype([("n", "<u4"), ("c", "<u4")])
_PCF_VALUE = np.dtype("<f4")

_EXTENSIONS = {
    ".xyz": XYZ_ASCII,
    ".txt": XYZ_ASCII,
    ".pcf": PCF_BINARY,
}


@dataclass(frozen=True)
class CloudFile:
    path: Path
    format: str

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"Unknown cloud format `{self.format}`")

    @classmethod
    def sniff(cls, path):
        """Format from the magic bytes, else from the extension."""
        path = Path(path)
        with open(path, "rb") as fid:
            head = fid.read(len(PCF_MAGIC))
        if head == PCF_MAGIC:
            return cls(path, PCF_BINARY)
        return cls(path, _EXTENSIONS.get(path.suffix.lower(), XYZ_ASCII))

    def read(self):
        if self.format == PCF_BINARY:
            return _read_pcf(self.path)
        return _read_xyz(self.path)


def format_for_path(path):
    return _EXTENSIONS.get(Path(path).suffix.lower(), XYZ_ASCII)


def _read_xyz(path):
    try:
        with open(path, "r", encoding="utf-8") as fid:
            return _parse_xyz(path, fid)
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc.reason})") from exc


def _parse_xyz(path, fid):
    rows = []
    width = None
    for lineno, line in enumerate(fid, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) < 3:
            raise ParseError(
                f"{path}:{lineno}: expected at least 3 fields, "
                f"got {len(fields)}"
            )
        try:
            values = [float(ff) for ff in fields]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise InconsistentColumns(
                f"{path}:{lineno}: {len(values)} fields, "
                f"previous lines have {width}"
            )
        rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no points found")
    data = np.array(rows, dtype=np.float64)
    features = data[:, 3:] if width > 3 else None
    return validate_cloud(data[:, :3], features)


def _read_pcf(path):
    raw = Path(path).read_bytes()
    n_head = len(PCF_MAGIC) + _PCF_HEADER.itemsize
    if len(raw) < n_head or raw[: len(PCF_MAGIC)] != PCF_MAGIC:
        raise ParseError(f"{path}: not a PCF1 file")
    header = np.frombuffer(raw, dtype=_PCF_HEADER, count=1, offset=4)[0]
    n_points, n_channels = int(header["n"]), int(header["c"])
    if n_points < 1:
        raise InvalidInput(f"{path}: no points")
    expected = n_head + _PCF_VALUE.itemsize * n_points * (3 + n_channels)
    if len(raw) < expected:
        raise ParseError(
            f"{path}: truncated, {len(raw)} bytes for N={n_points}, "
            f"C={n_channels} ({expected} expected)"
        )
    if len(raw) > expected:
        raise ParseError(f"{path}: {len(raw) - expected} trailing bytes")
    data = np.frombuffer(raw, dtype=_PCF_VALUE, offset=n_head).reshape(
        n_points, 3 + n_channels
    )
    data = data.astype(np.float64)
    features = data[:, 3:] if n_channels > 0 else None
    return validate_cloud(data[:, :3], features)


def read_cloud(path, format=None):
    """Read a cloud, sniffing the format unless ``format`` is given.

    Raises:
        ParseError: malformed text line or truncated binary.
        InconsistentColumns: text rows with different field counts.
        OSError: the file cannot be read.
    """
    if format is None:
        return CloudFile.sniff(path).read()
    return CloudFile(Path(path), format).read()


def _cloud_table(cloud):
    if cloud.features is None:
        return cloud.coords
    return np.concatenate([cloud.coords, cloud.features], axis=1)


def write_cloud(cloud, path, format=None, comment=None):
    """Write ``cloud`` (a ``PointCloud`` or an N x (3 + C) array).

    ``xyz-ascii`` prints 9 significant digits; ``pcf-binary`` stores
    float32, so only float32 representable clouds round-trip exactly.
    ``comment`` lines are written as ``#`` lines in text files.
    """
    if not isinstance(cloud, PointCloud):
        table = np.asarray(cloud, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 3:
            raise InvalidInput(
                f"cannot write a cloud of shape {table.shape}, "
                "need (N>=1, 3+C)"
            )
        features = table[:, 3:] if table.shape[1] > 3 else None
        cloud = validate_cloud(table[:, :3], features)
    format = format or format_for_path(path)
    table = _cloud_table(cloud)

    if format == XYZ_ASCII:
        with open(path, "w", encoding="utf-8") as fid:
            if comment:
                for line in str(comment).splitlines():
                    fid.write("# " + line.lstrip("# ") + "\n")
            np.savetxt(fid, table, fmt="%.9g", delimiter=" ")
    elif format == PCF_BINARY:
        with np.errstate(over="ignore"):
            values = table.astype(_PCF_VALUE)
        if not np.all(np.isfinite(values)):
            raise InvalidInput("cloud values overflow float32")
        header = np.array(
            [(cloud.n_points, cloud.n_channels)], dtype=_PCF_HEADER
        )
        with open(path, "wb") as fid:
            fid.write(PCF_MAGIC)
            fid.write(header.tobytes())
            fid.write(np.ascontiguousarray(values).tobytes())
    else:
        raise ValueError(f"Unknown cloud format `{format}`")
    log.debug(f"wrote {cloud.n_points} points to {path} as {format}")
