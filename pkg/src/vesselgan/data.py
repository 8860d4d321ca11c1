"""Paired-sample loading, augmentation, and range mapping.

A sample is a fundus-style image in [0, 1], a binary vessel label, and an
optional field-of-view mask. Manifests are small CSVs pointing at image
files; paths are resolved relative to the manifest's directory. Geometric
augmentation applies one identical transform to image, label, and mask
(bilinear for the image, nearest for label and mask); intensity jitter
touches the image only.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from vesselgan import imgio

__all__ = [
    "SamplePair",
    "AugmentPolicy",
    "ManifestError",
    "ManifestMissingFile",
    "ManifestSizeMismatch",
    "ManifestDecodeError",
    "load_manifest",
    "write_manifest",
    "augment",
    "to_model_range",
    "from_model_range",
    "data_workers",
]

MANIFEST_COLUMNS = ("id", "image", "label", "mask")


class ManifestError(ValueError):
    """A manifest row could not be turned into a sample."""


class ManifestMissingFile(ManifestError):
    pass


class ManifestSizeMismatch(ManifestError):
    pass


class ManifestDecodeError(ManifestError):
    pass


@dataclass
class SamplePair:
    """One training/evaluation pair.

    image -- (H, W, 3) float64 in [0, 1]
    label -- (H, W, 1) float64 taking only {0, 1}
    mask  -- (H, W, 1) float64 taking only {0, 1}, or None for full-frame
    """

    id: str
    image: np.ndarray
    label: np.ndarray
    mask: np.ndarray | None = None

    def validate(self) -> "SamplePair":
        img, lab = self.image, self.label
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"{self.id}: image must be (H, W, 3), got {img.shape}")
        if lab.shape != (img.shape[0], img.shape[1], 1):
            raise ValueError(f"{self.id}: label {lab.shape} does not match image {img.shape}")
        if img.min() < 0.0 or img.max() > 1.0:
            raise ValueError(f"{self.id}: image values outside [0, 1]")
        if not np.isin(lab, (0.0, 1.0)).all():
            raise ValueError(f"{self.id}: label must be binary")
        if self.mask is not None:
            if self.mask.shape != lab.shape:
                raise ValueError(f"{self.id}: mask {self.mask.shape} does not match label {lab.shape}")
            if not np.isin(self.mask, (0.0, 1.0)).all():
                raise ValueError(f"{self.id}: mask must be binary")
        return self


def data_workers() -> int:
    """Data-prep parallelism cap from VESSELGAN_THREADS (default 1)."""
    raw = os.environ.get("VESSELGAN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"VESSELGAN_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def _to_unit(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float64) / 255.0


def _as_gray(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    return arr


def _load_row(manifest_dir, row_num, row) -> SamplePair:
    sample_id = row["id"]

    def decode(column, path):
        full = os.path.join(manifest_dir, path)
        if not os.path.exists(full):
            raise ManifestMissingFile(f"row {row_num} ({sample_id}): {column} file not found: {full}")
        try:
            return imgio.read_image(full)
        except imgio.DecodeError as exc:
            raise ManifestDecodeError(f"row {row_num} ({sample_id}): {exc}") from exc

    img = _to_unit(decode("image", row["image"]))
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)

    lab = _to_unit(_as_gray(decode("label", row["label"])))
    # binarize at half the 8-bit dynamic range
    lab = (lab >= 0.5).astype(np.float64)[:, :, None]
    if lab.shape[:2] != img.shape[:2]:
        raise ManifestSizeMismatch(
            f"row {row_num} ({sample_id}): label {lab.shape[:2]} does not match image {img.shape[:2]}"
        )

    mask = None
    if row.get("mask"):
        mask = _to_unit(_as_gray(decode("mask", row["mask"])))
        mask = (mask >= 0.5).astype(np.float64)[:, :, None]
        if mask.shape[:2] != img.shape[:2]:
            raise ManifestSizeMismatch(
                f"row {row_num} ({sample_id}): mask {mask.shape[:2]} does not match image {img.shape[:2]}"
            )

    return SamplePair(sample_id, img, lab, mask).validate()


def load_manifest(path, max_workers: int | None = None) -> list[SamplePair]:
    """Load every sample named by a manifest CSV, in row order.

    Header must be id,image,label with an optional trailing mask column.
    Decoding fans out over at most max_workers threads (default: the
    VESSELGAN_THREADS environment variable); ordering is by row regardless.
    """
    manifest_dir = os.path.dirname(os.path.abspath(path))
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ManifestError(f"cannot open manifest {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        cols = tuple(reader.fieldnames or ())
        if cols not in (("id", "image", "label"), ("id", "image", "label", "mask")):
            raise ManifestError(
                f"{path}: manifest header must be id,image,label[,mask], got {','.join(cols) or '(empty)'}"
            )
        rows = [(i + 2, row) for i, row in enumerate(reader)]  # +2: header is line 1
    for n, row in rows:
        if not row["id"] or not row["image"] or not row["label"]:
            raise ManifestError(f"{path}: row {n} has empty required fields")

    workers = data_workers() if max_workers is None else max(1, max_workers)
    if workers == 1 or len(rows) <= 1:
        return [_load_row(manifest_dir, n, row) for n, row in rows]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda nr: _load_row(manifest_dir, nr[0], nr[1]), rows))


def write_manifest(path, rows) -> None:
    """rows: iterables of (id, image, label[, mask]) path tuples."""
    rows = [tuple(r) for r in rows]
    with_mask = any(len(r) == 4 for r in rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS if with_mask else MANIFEST_COLUMNS[:3])
        for r in rows:
            writer.writerow(r + ("",) * (4 - len(r)) if with_mask else r[:3])


# -- augmentation ------------------------------------------------------------


@dataclass(frozen=True)
class AugmentPolicy:
    """Enable flags and parameter ranges for per-step augmentation.

    rotate_deg / translate_px bound symmetric uniform draws; flips are
    50/50 coin tosses; intensity jitter rescales and shifts the image only.
    Setting a range to 0 (or a flag to False) disables that transform.
    """

    rotate: bool = True
    rotate_deg: float = 30.0
    flip_h: bool = True
    flip_v: bool = True
    translate: bool = True
    translate_px: int = 0
    intensity: bool = True
    intensity_scale: tuple[float, float] = (0.8, 1.2)
    intensity_shift: tuple[float, float] = (-0.1, 0.1)

    @staticmethod
    def default_for_side(side: int) -> "AugmentPolicy":
        return AugmentPolicy(translate_px=int(round(0.1 * side)))

    @staticmethod
    def disabled() -> "AugmentPolicy":
        return AugmentPolicy(rotate=False, flip_h=False, flip_v=False, translate=False, intensity=False)


def _geometric(arr: np.ndarray, angle_deg: float, tx: float, ty: float, order: int) -> np.ndarray:
    """Rotate about the center then translate by (ty, tx), zero fill.

    order 1 = bilinear (images), order 0 = nearest (labels/masks).
    """
    theta = np.deg2rad(angle_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    inv = np.array([[cos, sin], [-sin, cos]])  # inverse rotation
    center = (np.array(arr.shape[:2]) - 1) / 2.0
    shift = np.array([ty, tx], dtype=np.float64)
    offset = center - inv @ (center + shift)
    out = np.empty_like(arr)
    for c in range(arr.shape[2]):
        out[:, :, c] = ndimage.affine_transform(
            arr[:, :, c], inv, offset=offset, order=order, mode="constant", cval=0.0, prefilter=False
        )
    return out


def augment(pair: SamplePair, policy: AugmentPolicy, rng: np.random.Generator) -> SamplePair:
    """One randomly parameterized draw of the enabled transforms.

    Image, label, and mask get the same geometry; the label and mask stay
    strictly binary (nearest-neighbor resampling, zero fill).
    """
    img, lab = pair.image, pair.label
    mask = pair.mask

    if policy.flip_h and rng.random() < 0.5:
        img, lab = img[:, ::-1], lab[:, ::-1]
        mask = mask if mask is None else mask[:, ::-1]
    if policy.flip_v and rng.random() < 0.5:
        img, lab = img[::-1], lab[::-1]
        mask = mask if mask is None else mask[::-1]

    angle = rng.uniform(-policy.rotate_deg, policy.rotate_deg) if policy.rotate and policy.rotate_deg else 0.0
    tx = ty = 0
    if policy.translate and policy.translate_px:
        tx = int(rng.integers(-policy.translate_px, policy.translate_px + 1))
        ty = int(rng.integers(-policy.translate_px, policy.translate_px + 1))
    if angle != 0.0 or tx or ty:
        img = np.clip(_geometric(img, angle, tx, ty, order=1), 0.0, 1.0)
        lab = _geometric(lab, angle, tx, ty, order=0)
        mask = mask if mask is None else _geometric(mask, angle, tx, ty, order=0)

    if policy.intensity:
        scale = rng.uniform(*policy.intensity_scale)
        shift = rng.uniform(*policy.intensity_shift)
        img = np.clip(img * scale + shift, 0.0, 1.0)

    return SamplePair(pair.id, np.ascontiguousarray(img), np.ascontiguousarray(lab),
                      None if mask is None else np.ascontiguousarray(mask))


# -- value range mapping ------------------------------------------------------


def to_model_range(a: np.ndarray) -> np.ndarray:
    """[0, 1] -> [-1, 1] via 2v - 1."""
    a = np.asarray(a, dtype=np.float64)
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise ValueError(f"to_model_range: input must lie in [0, 1], got [{a.min()}, {a.max()}]")
    return 2.0 * a - 1.0


def from_model_range(a: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 1] via (v + 1) / 2."""
    a = np.asarray(a, dtype=np.float64)
    if a.size and (a.min() < -1.0 or a.max() > 1.0):
        raise ValueError(f"from_model_range: input must lie in [-1, 1], got [{a.min()}, {a.max()}]")
    return (a + 1.0) / 2.0
