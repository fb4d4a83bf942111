"""File formats: binary containers, CSV tables and 16-bit PGM images.

Every binary file starts with ``magic, version, kind`` followed by a
kind-specific header and little-endian float64 payload arrays.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import FOV, MatrixFieldGrid, ScalarGrid
from .preprocess import SpectrumRecord
from .simulation import ScanRecord

MAGIC = b"DMPI"
VERSION = 1
KIND_SCAN, KIND_FIELD, KIND_SCALAR, KIND_SPECTRUM = 1, 2, 3, 4
_PREAMBLE = struct.Struct("<4sHH")
_F8 = np.dtype("<f8")
_C16 = np.dtype("<c16")


def _write(path, kind, header, arrays):
    with open(path, "wb") as fh:
        fh.write(_PREAMBLE.pack(MAGIC, VERSION, kind))
        fh.write(header)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes())


class _Reader:
    def __init__(self, path, kind):
        self.buf = Path(path).read_bytes()
        if len(self.buf) < _PREAMBLE.size:
            raise ConfigError(f"{path}: truncated file")
        magic, version, got = _PREAMBLE.unpack_from(self.buf)
        if magic != MAGIC:
            raise ConfigError(f"{path}: not a container file")
        if version != VERSION:
            raise ConfigError(f"{path}: unsupported version {version}")
        if got != kind:
            raise ConfigError(f"{path}: holds kind {got}, expected {kind}")
        self.pos = _PREAMBLE.size
        self.path = path

    def unpack(self, fmt):
        s = struct.Struct("<" + fmt)
        out = s.unpack_from(self.buf, self.pos)
        self.pos += s.size
        return out

    def array(self, shape, dtype=_F8):
        count = int(np.prod(shape))
        nbytes = count * dtype.itemsize
        if self.pos + nbytes > len(self.buf):
            raise ConfigError(f"{self.path}: truncated payload")
        a = np.frombuffer(self.buf, dtype=dtype, count=count, offset=self.pos)
        self.pos += nbytes
        return a.reshape(shape).astype(dtype.newbyteorder("="))


def save_scan(path, scan):
    """Header ``n, L, dt, model, tau[n], calibration``; payload samples, positions, velocities, s0."""
    header = struct.pack("<IId8s", scan.n, scan.L, scan.dt, scan.model.encode()[:8])
    header += np.asarray(scan.tau, dtype=_F8).tobytes() + struct.pack("<d", scan.calibration)
    arrays = [np.asarray(a, dtype=_F8) for a in (scan.samples, scan.positions, scan.velocities, scan.s0)]
    _write(path, KIND_SCAN, header, arrays)


def load_scan(path):
    r = _Reader(path, KIND_SCAN)
    n, L, dt, model = r.unpack("IId8s")
    tau = r.array((n,))
    (cal,) = r.unpack("d")
    samples, pos, vel = (r.array((L, n)) for _ in range(3))
    s0 = r.array((n,))
    return ScanRecord(samples, pos, vel, dt, s0, model=model.rstrip(b"\0").decode(), tau=tau,
                      calibration=cal)


def _fov_bytes(fov):
    return struct.pack("<4d", fov.xmin, fov.xmax, fov.ymin, fov.ymax)


def save_grid(path, grid):
    """Store a :class:`ScalarGrid` or :class:`MatrixFieldGrid`."""
    nx, ny = grid.shape
    if isinstance(grid, MatrixFieldGrid):
        header = struct.pack("<III", nx, ny, grid.n) + _fov_bytes(grid.fov)
        _write(path, KIND_FIELD, header, [np.asarray(grid.values, dtype=_F8)])
    else:
        header = struct.pack("<II", nx, ny) + _fov_bytes(grid.fov)
        _write(path, KIND_SCALAR, header, [np.asarray(grid.values, dtype=_F8)])


def load_field(path):
    r = _Reader(path, KIND_FIELD)
    nx, ny, n = r.unpack("III")
    fov = FOV(*r.unpack("4d"))
    return MatrixFieldGrid(r.array((nx, ny, n, n)), fov)


def load_scalar(path):
    r = _Reader(path, KIND_SCALAR)
    nx, ny = r.unpack("II")
    fov = FOV(*r.unpack("4d"))
    return ScalarGrid(r.array((nx, ny)), fov)


def save_spectrum(path, spec):
    has_snr = spec.snr is not None
    header = struct.pack("<IIdI", spec.n, spec.L, spec.dt, int(has_snr))
    arrays = [np.asarray(spec.spectrum, dtype=_C16)]
    if has_snr:
        arrays.append(np.asarray(spec.snr, dtype=_F8))
    _write(path, KIND_SPECTRUM, header, arrays)


def load_spectrum(path):
    r = _Reader(path, KIND_SPECTRUM)
    n, L, dt, has_snr = r.unpack("IIdI")
    spectrum = r.array((L, n), _C16)
    snr = r.array((L, n)) if has_snr else None
    return SpectrumRecord(spectrum, dt, snr)


# ------------------------------------------------------------------- CSV

def format_float(x):
    """Shortest round-tripping representation, stable across runs."""
    return repr(float(x))


def scan_to_csv(scan, path=None):
    """One row per sample: ``t, s_x, s_y, r_x, r_y, v_x, v_y``."""
    axes = "xyz"[:scan.n]
    cols = ["t"] + [f"s_{a}" for a in axes] + [f"r_{a}" for a in axes] + [f"v_{a}" for a in axes]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    data = np.column_stack([scan.times, scan.samples, scan.positions, scan.velocities])
    for row in data:
        w.writerow([format_float(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_aftf_csv(path):
    """Two-column ``real, imag`` transfer function; a header line is optional."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append(complex(float(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise ConfigError(f"{path}: bad row {row}") from None
    if not rows:
        raise ConfigError(f"{path}: no transfer-function values")
    return np.array(rows)


def write_table(path, columns, rows):
    """Write dict rows with a fixed column order; floats use :func:`format_float`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_float(row[c]) if isinstance(row[c], (float, np.floating)) else row[c]
                    for c in columns])
    Path(path).write_text(buf.getvalue())


# ------------------------------------------------------------------ images

def save_pgm(path, grid):
    """16-bit binary PGM with min-max scaling; negatives are clipped first.

    The scaling is written to ``<path>.txt`` so values can be recovered as
    ``vmin + pixel / 65535 * (vmax - vmin)``.
    """
    values = np.clip(np.asarray(grid.values, dtype=float), 0.0, None)
    vmin, vmax = float(values.min()), float(values.max())
    span = vmax - vmin
    scaled = np.zeros_like(values) if span == 0 else (values - vmin) / span
    pix = np.round(scaled * 65535).astype(">u2")
    # rows of the image run along y, top row is the largest y
    img = pix.T[::-1]
    h, w = img.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n65535\n".encode() + img.tobytes())
    fov = grid.fov
    path.with_name(path.name + ".txt").write_text(
        f"vmin = {format_float(vmin)}\nvmax = {format_float(vmax)}\n"
        f"fov = {format_float(fov.xmin)} {format_float(fov.xmax)} "
        f"{format_float(fov.ymin)} {format_float(fov.ymax)}\n")
    return path


def load_pgm(path):
    """Read a PGM written by :func:`save_pgm`, returning the normalized array."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ConfigError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    img = np.frombuffer(parts[4][: 2 * w * h], dtype=">u2").reshape(h, w)
    return img[::-1].T.astype(float) / maxval
