"""Dataset directories and the synthetic ellipse generator.

A dataset directory holds three parallel folders keyed by file stem::

    images/<stem>.png     8-bit RGB
    labels/<stem>.png16   16-bit label map, 0 = background
    rdm/<stem>.bsgt       cached reverse distance map, (H, W, 1) float32
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, GenerationError, ShapeError
from .instances import connected_components
from .io import read_label_map, read_rgb, read_tensor, write_label_map, write_rgb, write_tensor
from .rdm import reverse_distance_map

log = logging.getLogger(__name__)

IMAGE_DIR, LABEL_DIR, RDM_DIR = "images", "labels", "rdm"
LABEL_SUFFIX = ".png16"

# semi-axis range in pixels, i.e. full axes of 3-8 px
MIN_SEMI_AXIS, MAX_SEMI_AXIS = 1.5, 4.0
BACKGROUND_RGB = np.array([226.0, 198.0, 222.0])
NUCLEUS_RGB = np.array([92.0, 58.0, 148.0])


@dataclass
class Dataset:
    names: list[str]
    images: np.ndarray  # (N, H, W, 3) uint8
    labels: np.ndarray  # (N, H, W) int32
    rdms: np.ndarray | None  # (N, H, W) float32

    def __len__(self):
        return len(self.names)


def _ellipse_pixels(size, rng):
    cy, cx = rng.uniform(0, size, 2)
    a, b = rng.uniform(MIN_SEMI_AXIS, MAX_SEMI_AXIS, 2)
    theta = rng.uniform(0, np.pi)
    yy, xx = np.mgrid[0:size, 0:size]
    dy, dx = yy + 0.5 - cy, xx + 0.5 - cx
    u = (dx * np.cos(theta) + dy * np.sin(theta)) / a
    v = (-dx * np.sin(theta) + dy * np.cos(theta)) / b
    r2 = u * u + v * v
    return r2 <= 1.0, np.sqrt(np.minimum(r2, 1.0))


def synth_labels(size: int, density: int, rng: np.random.Generator, max_attempts: int | None = None):
    """Place ``density`` ellipses separated by at least one background pixel.

    Returns (labels, radial) where radial is the normalized elliptical radius
    inside each instance, used for shading.
    """
    labels = np.zeros((size, size), dtype=np.int32)
    radial = np.zeros((size, size), dtype=np.float64)
    blocked = np.zeros((size, size), dtype=bool)
    attempts = max_attempts or 200 * max(density, 1)
    placed = 0
    for _ in range(attempts):
        if placed == density:
            break
        pix, rad = _ellipse_pixels(size, rng)
        if pix.sum() < 4 or (pix & blocked).any():
            continue
        if connected_components(pix).max() != 1:
            continue
        placed += 1
        labels[pix] = placed
        radial[pix] = rad[pix]
        # 3x3 dilation keeps a background pixel between instances in every direction
        blocked |= ndimage.binary_dilation(pix, structure=np.ones((3, 3), bool))
    if placed < density:
        raise GenerationError(
            f"placed only {placed} of {density} instances in a {size}x{size} image after {attempts} attempts; "
            "lower the density"
        )
    return labels, radial


def render_image(labels: np.ndarray, radial: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Textured light background, darker shaded nuclei, Gaussian pixel noise."""
    size_h, size_w = labels.shape
    texture = ndimage.gaussian_filter(rng.standard_normal((size_h, size_w, 3)), sigma=(3, 3, 0))
    texture /= max(texture.std(), 1e-8)
    img = BACKGROUND_RGB + 10.0 * texture
    n = int(labels.max())
    tint = rng.uniform(0.8, 1.2, n + 1)
    fg = labels > 0
    cell = NUCLEUS_RGB[None, :] * tint[labels[fg]][:, None] + 30.0 * radial[fg][:, None]
    img[fg] = cell
    img = ndimage.gaussian_filter(img, sigma=(0.6, 0.6, 0))
    img += rng.normal(0.0, 8.0, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def synth_item(size: int, density: int, rng: np.random.Generator):
    labels, radial = synth_labels(size, density, rng)
    return render_image(labels, radial, rng), labels


def synth_dataset(out_dir, n: int, size: int = 32, density: int = 6, seed: int = 0) -> list[str]:
    """Write ``n`` synthetic items (image, label map, ground-truth RDM) under ``out_dir``."""
    if size < 16:
        raise ConfigError("size", f"must be >= 16, got {size}")
    if n < 1:
        raise ConfigError("n", f"must be >= 1, got {n}")
    if density < 0:
        raise ConfigError("density", f"must be >= 0, got {density}")
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    names = []
    for i in range(n):
        name = f"{i:04d}"
        img, labels = synth_item(size, density, rng)
        write_rgb(out / IMAGE_DIR / f"{name}.png", img)
        write_label_map(out / LABEL_DIR / f"{name}{LABEL_SUFFIX}", labels)
        write_tensor(out / RDM_DIR / f"{name}.bsgt", reverse_distance_map(labels)[..., None])
        names.append(name)
    return names


def label_files(directory) -> dict[str, Path]:
    directory = Path(directory)
    if (directory / LABEL_DIR).is_dir():
        directory = directory / LABEL_DIR
    return {p.name[: -len(LABEL_SUFFIX)]: p for p in sorted(directory.glob(f"*{LABEL_SUFFIX}"))}


def compute_rdms(data_dir) -> int:
    """(Re)compute cached RDM tensors for every label map in a dataset directory."""
    data_dir = Path(data_dir)
    files = label_files(data_dir)
    for name, path in files.items():
        write_tensor(data_dir / RDM_DIR / f"{name}.bsgt", reverse_distance_map(read_label_map(path))[..., None])
    return len(files)


def image_files(directory) -> dict[str, Path]:
    directory = Path(directory)
    if (directory / IMAGE_DIR).is_dir():
        directory = directory / IMAGE_DIR
    return {p.stem: p for p in sorted(directory.glob("*.png"))}


def load_dataset(data_dir, require_rdm: bool = True) -> Dataset:
    data_dir = Path(data_dir)
    images = image_files(data_dir)
    labels = label_files(data_dir)
    if not images:
        raise FileNotFoundError(f"no images found under {data_dir / IMAGE_DIR}")
    missing = sorted(set(images) - set(labels))
    if missing:
        raise FileNotFoundError(f"missing label maps for: {', '.join(missing[:5])}")
    names = sorted(images)
    imgs, labs, rdms = [], [], []
    for name in names:
        img = read_rgb(images[name])
        lab = read_label_map(labels[name])
        if img.shape[:2] != lab.shape:
            raise ShapeError(f"{name}: image {img.shape[:2]} and label map {lab.shape} differ")
        imgs.append(img)
        labs.append(lab)
        if require_rdm:
            path = data_dir / RDM_DIR / f"{name}.bsgt"
            if not path.exists():
                raise FileNotFoundError(f"{path} missing; run the rdm command first")
            r = read_tensor(path)
            if r.shape != lab.shape + (1,):
                raise ShapeError(f"{name}: cached rdm has shape {r.shape}, expected {lab.shape + (1,)}")
            rdms.append(r[..., 0])
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise ShapeError(f"all items must share one size, found {sorted(shapes)}")
    return Dataset(
        names,
        np.stack(imgs),
        np.stack(labs).astype(np.int32),
        np.stack(rdms).astype(np.float32) if require_rdm else None,
    )
