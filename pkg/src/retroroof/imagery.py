"""Raster I/O, color-space math, tiling/stitching and georeferencing.

Shared by every pipeline stage. All operations here are pure functions on
immutable inputs and safe to call concurrently.

Conventions:
  * L (luminance) rasters hold values in [0, 100]
  * RGB rasters hold sRGB values in [0, 1]
  * LAB rasters hold CIELAB values, L in [0, 100], a/b in [-128, 128]
  * color math uses sRGB primaries with the D65 white point
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

CHANNEL_COUNTS = {"L": 1, "RGB": 3, "LAB": 3}


class ChannelMismatchError(ValueError):
    """Raster channel tag does not match what the operation expects."""


class CoverageError(ValueError):
    """Tile set does not cover every pixel of the stitch target."""


@dataclass(frozen=True)
class Raster:
    """A planar image: (H, W, C) float64 samples plus a channel tag."""

    channels: str
    samples: np.ndarray

    def __post_init__(self):
        if self.channels not in CHANNEL_COUNTS:
            raise ChannelMismatchError(f"unknown channel tag {self.channels!r}")
        arr = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] != CHANNEL_COUNTS[self.channels]:
            raise ChannelMismatchError(
                f"{self.channels} raster needs {CHANNEL_COUNTS[self.channels]} "
                f"channels, got array of shape {arr.shape}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("raster must be at least 1x1")
        object.__setattr__(self, "samples", arr)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]


def _require(r: Raster, *tags: str) -> None:
    if r.channels not in tags:
        raise ChannelMismatchError(f"expected {' or '.join(tags)} raster, got {r.channels}")


@dataclass(frozen=True)
class GeoTransform:
    """Affine pixel->world mapping; pixel_h is negative for north-up rasters."""

    origin_x: float
    origin_y: float
    pixel_w: float
    pixel_h: float

    def __post_init__(self):
        if self.pixel_w == 0 or self.pixel_h == 0:
            raise ValueError("pixel sizes must be nonzero")


@dataclass(frozen=True)
class TileGrid:
    tile_size: int
    offsets: tuple = field(default_factory=tuple)
    source_width: int = 0
    source_height: int = 0


# --------------------------------------------------------------------------
# Color-space math (sRGB <-> CIELAB, D65)
# --------------------------------------------------------------------------

# sRGB -> XYZ matrix; the white point is taken as the exact row sums so that
# neutral inputs (r == g == b) map to a == b == 0 with no rounding residue.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_WHITE = _RGB_TO_XYZ.sum(axis=1)
_EPS = 216.0 / 24389.0  # (6/29)^3
_KAPPA = 24389.0 / 27.0


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c: np.ndarray) -> np.ndarray:
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EPS, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)


def _lab_f_inv(f: np.ndarray) -> np.ndarray:
    f3 = f**3
    return np.where(f3 > _EPS, f3, (116.0 * f - 16.0) / _KAPPA)


def rgb_to_lab(r: Raster) -> Raster:
    """Convert an sRGB raster (values in [0,1]) to CIELAB."""
    _require(r, "RGB")
    lin = _srgb_to_linear(r.samples)
    xyz = lin @ _RGB_TO_XYZ.T
    f = _lab_f(xyz / _WHITE)
    lum = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return Raster("LAB", np.stack([lum, a, b], axis=-1))


def lab_to_rgb(r: Raster) -> Raster:
    """Convert CIELAB back to sRGB; out-of-gamut results clip to [0,1]."""
    _require(r, "LAB")
    lum, a, b = r.samples[..., 0], r.samples[..., 1], r.samples[..., 2]
    fy = (lum + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)], axis=-1) * _WHITE
    rgb = _linear_to_srgb(xyz @ _XYZ_TO_RGB.T)
    return Raster("RGB", np.clip(rgb, 0.0, 1.0))


def gray_to_luminance(r: Raster) -> Raster:
    """Rescale an 8-bit archive scan (stored 0..255) to L in [0,100]."""
    _require(r, "L")
    return Raster("L", r.samples * (100.0 / 255.0))


# --------------------------------------------------------------------------
# Tiling
# --------------------------------------------------------------------------


def _axis_offsets(dim: int, tile: int, overlap: int) -> list[int]:
    step = tile - overlap
    offsets = list(range(0, dim - tile + 1, step))
    if offsets[-1] != dim - tile:
        offsets.append(dim - tile)  # clamp flush to the border, no padding
    return offsets


def make_tile_grid(width: int, height: int, tile: int, overlap: int = 0) -> TileGrid:
    """Regular tile grid; edge tiles clamp flush so all tiles stay in bounds."""
    if not 0 <= overlap < tile:
        raise ValueError(f"need 0 <= overlap < tile, got overlap={overlap}, tile={tile}")
    if tile > min(width, height):
        raise ValueError(f"tile size {tile} exceeds image dims {width}x{height}")
    offsets = tuple(
        (x, y) for y in _axis_offsets(height, tile, overlap) for x in _axis_offsets(width, tile, overlap)
    )
    return TileGrid(tile_size=tile, offsets=offsets, source_width=width, source_height=height)


def extract_tile(r: Raster, offset: tuple[int, int], tile: int) -> Raster:
    x, y = offset
    if x < 0 or y < 0 or x + tile > r.width or y + tile > r.height:
        raise ValueError(f"tile at {offset} size {tile} exceeds raster bounds")
    return Raster(r.channels, r.samples[y : y + tile, x : x + tile])


def tile_raster(r: Raster, grid: TileGrid) -> list[tuple[tuple[int, int], Raster]]:
    return [(off, extract_tile(r, off, grid.tile_size)) for off in grid.offsets]


def stitch(tiles: list[tuple[tuple[int, int], Raster]], grid: TileGrid) -> Raster:
    """Mosaic tiles back onto the grid canvas; overlap regions are averaged.

    Tiles may vary in size (super-resolution stitching crops seam margins);
    coverage of every canvas pixel is enforced.
    """
    if not tiles:
        raise CoverageError("no tiles supplied")
    channels = tiles[0][1].channels
    nchan = CHANNEL_COUNTS[channels]
    acc = np.zeros((grid.source_height, grid.source_width, nchan))
    cnt = np.zeros((grid.source_height, grid.source_width, 1))
    for (x, y), t in tiles:
        if t.channels != channels:
            raise ChannelMismatchError("tiles disagree on channel tag")
        if x < 0 or y < 0 or x + t.width > grid.source_width or y + t.height > grid.source_height:
            raise ValueError(f"tile at ({x},{y}) exceeds canvas bounds")
        acc[y : y + t.height, x : x + t.width] += t.samples
        cnt[y : y + t.height, x : x + t.width] += 1.0
    if np.any(cnt == 0):
        missing = np.argwhere(cnt[..., 0] == 0)[0]
        raise CoverageError(f"pixel (row={missing[0]}, col={missing[1]}) not covered by any tile")
    return Raster(channels, acc / cnt)


# --------------------------------------------------------------------------
# Georeferencing
# --------------------------------------------------------------------------


def world_to_pixel(x: float, y: float, g: GeoTransform) -> tuple[float, float]:
    """World coordinates -> fractional (col, row)."""
    return (x - g.origin_x) / g.pixel_w, (y - g.origin_y) / g.pixel_h


def pixel_to_world(col: float, row: float, g: GeoTransform) -> tuple[float, float]:
    return g.origin_x + col * g.pixel_w, g.origin_y + row * g.pixel_h


def read_world_file(path) -> GeoTransform:
    with open(path) as fh:
        vals = [float(line.strip()) for line in fh if line.strip()]
    if len(vals) != 6:
        raise ValueError(f"world file {path} must have 6 lines, found {len(vals)}")
    pixel_w, rot1, rot2, pixel_h, origin_x, origin_y = vals
    if rot1 != 0 or rot2 != 0:
        raise ValueError("rotated world files are not supported")
    return GeoTransform(origin_x=origin_x, origin_y=origin_y, pixel_w=pixel_w, pixel_h=pixel_h)


def write_world_file(g: GeoTransform, path) -> None:
    lines = [g.pixel_w, 0.0, 0.0, g.pixel_h, g.origin_x, g.origin_y]
    _atomic_write_text(path, "".join(f"{v!r}\n" for v in lines))


def world_file_path(raster_path) -> str:
    stem, _ = os.path.splitext(str(raster_path))
    return stem + ".wld"


# --------------------------------------------------------------------------
# Raster file I/O (PNG / TIFF via Pillow, 8-bit)
# --------------------------------------------------------------------------


def read_raster(path, scan: bool = False) -> Raster:
    """Read a PNG/TIFF image.

    Grayscale files load as L rasters (stored 0..255 rescaled to [0,100]);
    with scan=True the stored 8-bit values are kept verbatim so callers can
    apply gray_to_luminance themselves. Color files load as RGB in [0,1].
    """
    img = Image.open(path)
    if img.mode in ("L", "I;16", "I"):
        arr = np.asarray(img.convert("L"), dtype=np.float64)
        r = Raster("L", arr)
        return r if scan else gray_to_luminance(r)
    arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return Raster("RGB", arr)


def write_raster(r: Raster, path) -> None:
    """Write an L or RGB raster as an 8-bit PNG/TIFF (atomic)."""
    if r.channels == "L":
        arr = np.clip(np.rint(r.samples[..., 0] * (255.0 / 100.0)), 0, 255).astype(np.uint8)
        img = Image.fromarray(arr, mode="L")
    elif r.channels == "RGB":
        arr = np.clip(np.rint(r.samples * 255.0), 0, 255).astype(np.uint8)
        img = Image.fromarray(arr, mode="RGB")
    else:
        raise ChannelMismatchError("convert LAB rasters to RGB before writing")
    tmp = str(path) + ".tmp"
    img.save(tmp, format="TIFF" if str(path).lower().endswith((".tif", ".tiff")) else "PNG")
    os.replace(tmp, path)


def _atomic_write_text(path, text: str) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
