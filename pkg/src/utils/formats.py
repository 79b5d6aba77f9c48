import logging
from pathlib import Path
from typing import Dict, Iterable, Tuple

import numpy as np
import pandas as pd

from src.errors import FormatError
from src.imaging.grid import ImageGrid
from src.transform.vline import Sinogram

logger = logging.getLogger(__name__)

IMAGE_TAG = "VLT-IMG"
SINOGRAM_TAG = "VLT-SIN"
FORMATS = ("f32", "pgm", "csv")

# =========================
# RAW FLOAT32
# =========================

def write_raw(path, values: np.ndarray, tag: str):
    """One text header line "<tag> rows cols" followed by little-endian float32, row-major."""
    values = np.asarray(values)
    header = f"{tag} {values.shape[0]} {values.shape[1]}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_raw(path) -> Tuple[str, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        payload = fh.read()

    if len(header) != 3 or header[0] not in (IMAGE_TAG, SINOGRAM_TAG):
        raise FormatError(f"{path}: not a VLT raw file (header {header!r})")
    try:
        rows, cols = int(header[1]), int(header[2])
    except ValueError as exc:
        raise FormatError(f"{path}: bad dimensions in header {header!r}") from exc
    if len(payload) != 4 * rows * cols:
        raise FormatError(f"{path}: payload holds {len(payload)} bytes, header announces {rows}x{cols} floats")

    return header[0], np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(float)


# =========================
# PGM PREVIEW
# =========================

def write_pgm(path, values: np.ndarray):
    """16-bit binary PGM after an affine rescale to [0, 65535]; constant arrays map to 0."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    scaled = np.zeros(values.shape) if hi == lo else (values - lo) / (hi - lo) * 65535.0
    pixels = np.round(scaled).astype(">u2")

    # PGM rows run along the second index
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    # only reads the layout write_pgm produces: three header lines, then pixels
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        size = fh.readline().split()
        maxval = fh.readline().strip()
        payload = fh.read()
    if magic != b"P5" or len(size) != 2:
        raise FormatError(f"{path}: not a binary PGM file")
    cols, rows = int(size[0]), int(size[1])
    if maxval != b"65535":
        raise FormatError(f"{path}: expected 16-bit PGM, got maxval {maxval!r}")
    if len(payload) != 2 * rows * cols:
        raise FormatError(f"{path}: truncated PGM payload")
    return np.frombuffer(payload, dtype=">u2").reshape(rows, cols).astype(np.uint16)


# =========================
# CSV
# =========================

def write_csv(path, values: np.ndarray):
    """One CSV row per lattice row (images) or per vertex (sinograms), no header."""
    pd.DataFrame(np.asarray(values, dtype=float)).to_csv(path, header=False, index=False, float_format="%.10e")


def read_csv(path) -> np.ndarray:
    return pd.read_csv(path, header=None).to_numpy(dtype=float)


# =========================
# TYPED HELPERS
# =========================

def save_image(img: ImageGrid, out_dir, stem: str, formats: Iterable[str] = FORMATS) -> Dict[str, Path]:
    return _save(img.values, IMAGE_TAG, out_dir, stem, formats)


def save_sinogram(g: Sinogram, out_dir, stem: str, formats: Iterable[str] = FORMATS) -> Dict[str, Path]:
    return _save(g.values, SINOGRAM_TAG, out_dir, stem, formats)


def _save(values, tag, out_dir, stem, formats) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    written = {}
    for fmt in formats:
        path = out_dir / f"{stem}.{fmt}"
        if fmt == "f32":
            write_raw(path, values, tag)
        elif fmt == "pgm":
            write_pgm(path, values)
        elif fmt == "csv":
            write_csv(path, values)
        else:
            raise FormatError(f"unknown output format {fmt!r}; choose from {', '.join(FORMATS)}")
        written[fmt] = path
        logger.debug("wrote %s", path)
    return written


def load_image(path) -> ImageGrid:
    tag, values = read_raw(path)
    if tag != IMAGE_TAG:
        raise FormatError(f"{path}: holds {tag}, expected {IMAGE_TAG}")
    return ImageGrid(values)


def load_sinogram(path) -> Sinogram:
    tag, values = read_raw(path)
    if tag != SINOGRAM_TAG:
        raise FormatError(f"{path}: holds {tag}, expected {SINOGRAM_TAG}")
    return Sinogram(values)
