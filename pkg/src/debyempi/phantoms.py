"""Shape-primitive phantoms and their antialiased rasterization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import ScalarGrid


@dataclass(frozen=True)
class Disc:
    center: tuple
    radius: float
    intensity: float = 1.0

    def inside(self, x, y):
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 <= self.radius ** 2

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return cx - r, cx + r, cy - r, cy + r


@dataclass(frozen=True)
class Rectangle:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    intensity: float = 1.0

    def inside(self, x, y):
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)

    def bbox(self):
        return self.xmin, self.xmax, self.ymin, self.ymax


@dataclass(frozen=True)
class Tube:
    """Polyline of the given width with rounded joints."""

    points: tuple
    width: float
    intensity: float = 1.0

    def inside(self, x, y):
        pts = np.asarray(self.points, dtype=float)
        r2 = (self.width / 2) ** 2
        hit = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        for a, b in zip(pts[:-1], pts[1:]):
            d = b - a
            dd = float(d @ d)
            t = ((x - a[0]) * d[0] + (y - a[1]) * d[1]) / dd if dd > 0 else 0.0
            t = np.clip(t, 0.0, 1.0)
            px = a[0] + t * d[0] - x
            py = a[1] + t * d[1] - y
            hit |= px * px + py * py <= r2
        return hit

    def bbox(self):
        pts = np.asarray(self.points, dtype=float)
        w = self.width / 2
        return pts[:, 0].min() - w, pts[:, 0].max() + w, pts[:, 1].min() - w, pts[:, 1].max() + w


def rasterize_phantom(primitives, shape, fov, supersample=8):
    """Rasterize primitives by coverage sampling on ``supersample^2`` points per cell.

    Overlapping primitives combine by taking the maximum intensity, so
    values stay within ``[0, max intensity]``. Parts outside the FOV are
    clipped with a warning.
    """
    nx, ny = shape
    hx, hy = fov.spacing(shape)
    s = int(supersample)
    sub = (np.arange(s) + 0.5) / s
    xs = fov.xmin + hx * (np.arange(nx)[:, None] + sub[None, :]).ravel()
    ys = fov.ymin + hy * (np.arange(ny)[:, None] + sub[None, :]).ravel()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    fine = np.zeros_like(X)
    for prim in primitives:
        x0, x1, y0, y1 = prim.bbox()
        if x0 < fov.xmin or x1 > fov.xmax or y0 < fov.ymin or y1 > fov.ymax:
            warnings.warn(f"{type(prim).__name__} extends beyond the FOV and is clipped")
        fine = np.maximum(fine, np.where(prim.inside(X, Y), prim.intensity, 0.0))
    coarse = fine.reshape(nx, s, ny, s).mean(axis=(1, 3))
    return ScalarGrid(coarse, fov)


def _arc(cx, cy, r, a0, a1, n=24):
    a = np.linspace(a0, a1, n)
    return tuple(zip(cx + r * np.cos(a), cy + r * np.sin(a)))


def builtin_phantoms():
    """Phantoms sized for a 24 mm FOV, loosely after glyph-like test objects.

    Coordinates are in meters; x runs along the first grid axis.
    """
    mm = 1e-3
    spiral = np.linspace(0.0, 3.2 * np.pi, 60)
    rad = (1.5 + 1.9 * spiral / np.pi) * mm
    return {
        "dot": [Disc((0.0, 0.0), 3.0 * mm)],
        "icecream": [
            Disc((-2.0 * mm, 0.0), 3.5 * mm),
            Tube(((0.5 * mm, -3.0 * mm), (7.0 * mm, 0.0), (0.5 * mm, 3.0 * mm)), 1.6 * mm),
        ],
        "spiral": [Tube(tuple(zip(rad * np.cos(spiral), rad * np.sin(spiral))), 1.4 * mm)],
        "letter_t": [
            Rectangle(-6.0 * mm, -3.5 * mm, -6.0 * mm, 6.0 * mm),
            Rectangle(-6.0 * mm, 7.0 * mm, -1.2 * mm, 1.2 * mm),
        ],
        "ring": [Tube(_arc(0.0, 0.0, 5.0 * mm, 0.0, 2 * np.pi, 48), 1.6 * mm),
                 Disc((0.0, 0.0), 1.2 * mm)],
    }


def parse_phantom(text):
    """Parse a phantom description, one primitive per line, lengths in mm.

    ::

        disc  cx cy r [intensity]
        rect  xmin xmax ymin ymax [intensity]
        tube  width intensity x1 y1 x2 y2 ...

    Blank lines and ``#`` comments are ignored.
    """
    mm = 1e-3
    prims = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *nums = line.split()
        try:
            v = [float(x) for x in nums]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric value") from None
        if kind == "disc" and len(v) in (3, 4):
            prims.append(Disc((v[0] * mm, v[1] * mm), v[2] * mm, *v[3:]))
        elif kind == "rect" and len(v) in (4, 5):
            prims.append(Rectangle(*(x * mm for x in v[:4]), *v[4:]))
        elif kind == "tube" and len(v) >= 6 and len(v) % 2 == 0:
            pts = tuple(zip(np.array(v[2::2]) * mm, np.array(v[3::2]) * mm))
            prims.append(Tube(pts, v[0] * mm, v[1]))
        else:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
    if not prims:
        raise ValueError("phantom description is empty")
    return prims
