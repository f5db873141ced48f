"""File formats.

Cube (``MSIC1``)
    36-byte little-endian header ``magic[5] encoding u8 pad[2] height u32
    width u32 bands u32 start_nm f64 step_nm f64`` followed by float32 LE
    samples, band-major (all of band 0, then band 1, ...). Encoding tag 1 is the
    only one defined. A mosaic is stored as a one-band cube.
Stokes cube
    Three cube records back to back: S0, S1, S2.
Wiener model (``MSWIENER``)
    Header ``magic[8] version u16 tile_h u32 tile_w u32 window_tiles u32
    bands u32 components u32 num_filters u32 ridge f64 start_nm f64
    step_nm f64``, then the tile cells as int32, then one float64 LE row-major
    ``outputs x window`` matrix per tile phase in row-major phase order.
Sensitivity CSV
    First row wavelengths in nm, then one row per filter.
Pattern text
    ``tile H W K`` followed by ``H`` lines of ``W`` indices.

Every writer goes through :func:`atomic_write` (temp file + rename).
"""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import (
    FilterArrayPattern,
    MosaickedImage,
    MultispectralImage,
    SensitivityMatrix,
    SpectralGrid,
    StokesCube,
)
from .errors import FormatError
from .recovery.wiener import WienerModel

CUBE_MAGIC = b"MSIC1"
CUBE_HEADER = struct.Struct("<5sB2xIIIdd")
ENCODING_F32_BAND_MAJOR = 1
WIENER_MAGIC = b"MSWIENER"
WIENER_VERSION = 1
WIENER_HEADER = struct.Struct("<8sHIIIIIIddd")


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path) -> bytes:
    return Path(path).read_bytes()


def cube_to_bytes(x: MultispectralImage) -> bytes:
    g = x.grid
    header = CUBE_HEADER.pack(CUBE_MAGIC, ENCODING_F32_BAND_MAJOR, x.height, x.width, g.count, g.start_nm, g.step_nm)
    return header + np.ascontiguousarray(x.data.transpose(2, 0, 1), dtype="<f4").tobytes()


def cube_from_bytes(buf: bytes, offset: int = 0) -> tuple[MultispectralImage, int]:
    """Parse one cube record starting at ``offset``; returns the cube and the end offset."""
    end = offset + CUBE_HEADER.size
    if len(buf) < end:
        raise FormatError(
            f"truncated cube header at byte {offset}: expected {CUBE_HEADER.size} bytes, "
            f"got {len(buf) - offset}"
        )
    magic, enc, h, w, bands, start, step = CUBE_HEADER.unpack_from(buf, offset)
    if magic != CUBE_MAGIC:
        raise FormatError(f"bad magic at byte {offset}: expected {CUBE_MAGIC!r}, got {magic!r}")
    if enc != ENCODING_F32_BAND_MAJOR:
        raise FormatError(f"unknown payload encoding tag {enc} at byte {offset + 5}")
    if bands < 1 or not step > 0:
        raise FormatError(f"invalid spectral grid in header at byte {offset}")
    need = h * w * bands * 4
    have = len(buf) - end
    if have < need:
        raise FormatError(
            f"truncated payload at byte {end}: expected {need} bytes, got {have}"
        )
    data = np.frombuffer(buf, dtype="<f4", count=h * w * bands, offset=end)
    cube = data.reshape(bands, h, w).transpose(1, 2, 0).astype(np.float64)
    return MultispectralImage(cube, SpectralGrid(start, step, bands)), end + need


def write_cube(path, x: MultispectralImage) -> None:
    atomic_write(path, cube_to_bytes(x))


def read_cube(path) -> MultispectralImage:
    buf = _read(path)
    cube, end = cube_from_bytes(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing byte(s) after cube payload at byte {end}")
    return cube


def write_mosaic(path, y: MosaickedImage) -> None:
    write_cube(path, MultispectralImage(y.data[:, :, None], SpectralGrid(0.0, 1.0, 1)))


def read_mosaic(path) -> MosaickedImage:
    cube = read_cube(path)
    if cube.grid.count != 1:
        raise FormatError(f"expected a one-band mosaic file, got {cube.grid.count} bands")
    return MosaickedImage(cube.data[:, :, 0])


def write_stokes(path, s: StokesCube) -> None:
    parts = [cube_to_bytes(MultispectralImage(p, s.grid)) for p in (s.s0, s.s1, s.s2)]
    atomic_write(path, b"".join(parts))


def read_stokes(path) -> StokesCube:
    buf = _read(path)
    cubes, offset = [], 0
    for name in ("s0", "s1", "s2"):
        if offset >= len(buf):
            raise FormatError(f"missing {name} record at byte {offset}")
        cube, offset = cube_from_bytes(buf, offset)
        cubes.append(cube)
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing byte(s) after stokes records at byte {offset}")
    if any(c.shape != cubes[0].shape or not c.grid.matches(cubes[0].grid) for c in cubes):
        raise FormatError("stokes records disagree on shape or grid")
    return StokesCube(cubes[0].data, cubes[1].data, cubes[2].data, cubes[0].grid)


def sensitivity_to_csv(sens: SensitivityMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([repr(float(v)) for v in sens.grid.wavelengths])
    for row in sens.values:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def sensitivity_from_csv(text: str) -> SensitivityMatrix:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise FormatError("empty sensitivity CSV (line 1)")
    parsed = []
    for lineno, row in enumerate(rows, start=1):
        try:
            parsed.append([float(v) for v in row])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    wl = np.array(parsed[0])
    steps = np.diff(wl)
    if len(wl) > 1:
        bad = np.flatnonzero(steps <= 0)
        if len(bad):
            raise FormatError(
                f"line 1: wavelengths not increasing at column {bad[0] + 2} "
                f"({wl[bad[0]]} -> {wl[bad[0] + 1]})"
            )
        uneven = np.flatnonzero(~np.isclose(steps, steps[0], rtol=0, atol=1e-6))
        if len(uneven):
            raise FormatError(f"line 1: non-uniform wavelength step at column {uneven[0] + 2}")
    for lineno, row in enumerate(parsed[1:], start=2):
        if len(row) != len(wl):
            raise FormatError(f"line {lineno}: expected {len(wl)} values, got {len(row)}")
    if len(parsed) < 2:
        raise FormatError("line 2: no filter rows")
    step = float(steps[0]) if len(wl) > 1 else 1.0
    grid = SpectralGrid(float(wl[0]), step, len(wl))
    return SensitivityMatrix(np.array(parsed[1:]), grid)


def write_sensitivity(path, sens: SensitivityMatrix) -> None:
    atomic_write(path, sensitivity_to_csv(sens).encode())


def read_sensitivity(path) -> SensitivityMatrix:
    return sensitivity_from_csv(Path(path).read_text())


def pattern_to_text(p: FilterArrayPattern) -> str:
    lines = [f"tile {p.tile_height} {p.tile_width} {p.num_filters}"]
    lines += [" ".join(str(int(v)) for v in row) for row in p.cells]
    return "\n".join(lines) + "\n"


def pattern_from_text(text: str) -> FilterArrayPattern:
    lines = [ln for ln in text.splitlines()]
    if not lines:
        raise FormatError("line 1: empty pattern file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "tile":
        raise FormatError(f"line 1: expected 'tile H W K', got {lines[0]!r}")
    try:
        h, w, k = (int(v) for v in head[1:])
    except ValueError:
        raise FormatError(f"line 1: non-integer tile header {lines[0]!r}") from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != h:
        raise FormatError(f"line {len(body) + 2}: expected {h} rows of cells, got {len(body)}")
    cells = []
    for lineno, ln in enumerate(body, start=2):
        try:
            row = [int(v) for v in ln.split()]
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer cell") from None
        if len(row) != w:
            raise FormatError(f"line {lineno}: expected {w} cells, got {len(row)}")
        cells.append(row)
    return FilterArrayPattern(cells, k)


def write_pattern(path, p: FilterArrayPattern) -> None:
    atomic_write(path, pattern_to_text(p).encode())


def read_pattern(path) -> FilterArrayPattern:
    return pattern_from_text(Path(path).read_text())


def wiener_to_bytes(m: WienerModel) -> bytes:
    th, tw = m.pattern.tile_shape
    g = m.grid
    header = WIENER_HEADER.pack(
        WIENER_MAGIC, WIENER_VERSION, th, tw, m.window_tiles, g.count, m.components,
        m.pattern.num_filters, m.ridge, g.start_nm, g.step_nm,
    )
    cells = np.ascontiguousarray(m.pattern.cells, dtype="<i4").tobytes()
    return header + cells + np.ascontiguousarray(m.matrices, dtype="<f8").tobytes()


def wiener_from_bytes(buf: bytes) -> WienerModel:
    if len(buf) < WIENER_HEADER.size:
        raise FormatError(
            f"truncated wiener header: expected {WIENER_HEADER.size} bytes, got {len(buf)}"
        )
    magic, version, th, tw, wt, bands, comps, k, ridge, start, step = WIENER_HEADER.unpack_from(buf)
    if magic != WIENER_MAGIC:
        raise FormatError(f"bad magic at byte 0: expected {WIENER_MAGIC!r}, got {magic!r}")
    if version != WIENER_VERSION:
        raise FormatError(f"unsupported wiener model version {version} at byte 8")
    off = WIENER_HEADER.size
    ncell = th * tw
    d = wt * th * wt * tw
    nmat = th * tw * comps * bands * d
    need = off + 4 * ncell + 8 * nmat
    if len(buf) != need:
        raise FormatError(f"wiener payload size mismatch at byte {off}: expected {need} bytes total, got {len(buf)}")
    cells = np.frombuffer(buf, dtype="<i4", count=ncell, offset=off).reshape(th, tw)
    mats = np.frombuffer(buf, dtype="<f8", count=nmat, offset=off + 4 * ncell)
    mats = mats.reshape(th, tw, comps * bands, d).astype(np.float64)
    return WienerModel(FilterArrayPattern(cells, k), wt, mats, ridge, SpectralGrid(start, step, bands), comps)


def write_wiener(path, m: WienerModel) -> None:
    atomic_write(path, wiener_to_bytes(m))


def read_wiener(path) -> WienerModel:
    return wiener_from_bytes(_read(path))


def png_bytes(rgb: np.ndarray) -> bytes:
    """8-bit PNG encoding of an ``(H, W, 3)`` or ``(H, W)`` uint8 raster."""
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def write_png(path, rgb: np.ndarray) -> None:
    atomic_write(path, png_bytes(rgb))
