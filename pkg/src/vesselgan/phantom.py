"""Procedural fundus-style phantoms: disc, shading, and a branching vessel tree.

Each phantom is a circular field of view on black, smoothly shaded, with one
connected recursive branching tree of anti-aliased line segments drawn darker
than the background. The binary label is the half-width threshold of the
same tree; the mask is the disc. Everything is a pure function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from vesselgan.data import SamplePair

__all__ = ["PhantomConfig", "gen_phantom"]


@dataclass(frozen=True)
class PhantomConfig:
    disc_radius_frac: float = 0.47
    trunk_count: int = 2
    min_levels: int = 3
    max_levels: int = 4
    trunk_len_frac: float = 0.22      # of the side, per branch level before decay
    len_decay: float = 0.78
    trunk_width_frac: float = 0.034   # of the side
    width_decay: float = 0.72
    min_width_px: float = 1.4
    contrast: tuple[float, float] = (0.32, 0.48)
    noise_sigma: float = 0.025
    base_level: tuple[float, float] = (0.52, 0.68)

    def __post_init__(self):
        if not 3 <= self.min_levels <= self.max_levels <= 4:
            raise ValueError("branching levels must satisfy 3 <= min <= max <= 4")
        if self.trunk_count < 1:
            raise ValueError("need at least one trunk")


def _stamp_capsule(cov: np.ndarray, p0, p1, width: float) -> None:
    """Write the anti-aliased coverage of one thick segment into cov (max-union)."""
    side = cov.shape[0]
    half = width / 2.0
    pad = half + 1.5
    ylo = max(0, int(math.floor(min(p0[0], p1[0]) - pad)))
    yhi = min(side - 1, int(math.ceil(max(p0[0], p1[0]) + pad)))
    xlo = max(0, int(math.floor(min(p0[1], p1[1]) - pad)))
    xhi = min(side - 1, int(math.ceil(max(p0[1], p1[1]) + pad)))
    if ylo > yhi or xlo > xhi:
        return
    yy, xx = np.mgrid[ylo : yhi + 1, xlo : xhi + 1]
    vy, vx = p1[0] - p0[0], p1[1] - p0[1]
    vv = vy * vy + vx * vx
    if vv == 0.0:
        dist = np.hypot(yy - p0[0], xx - p0[1])
    else:
        t = np.clip(((yy - p0[0]) * vy + (xx - p0[1]) * vx) / vv, 0.0, 1.0)
        dist = np.hypot(yy - (p0[0] + t * vy), xx - (p0[1] + t * vx))
    patch = np.clip(half + 0.5 - dist, 0.0, 1.0)
    region = cov[ylo : yhi + 1, xlo : xhi + 1]
    np.maximum(region, patch, out=region)


def _grow(rng, segments, pos, direction, length, width, level, max_level, center, keep_r, cfg):
    """Depth-first branch growth; every child starts where its parent ended."""
    chunks = 3
    ang = direction
    for _ in range(chunks):
        step = length / chunks
        end = (pos[0] + step * math.sin(ang), pos[1] + step * math.cos(ang))
        if math.hypot(end[0] - center[0], end[1] - center[1]) > keep_r:
            # steer back toward the disc center rather than leaving the field
            ang = math.atan2(center[0] - pos[0], center[1] - pos[1]) + rng.uniform(-0.5, 0.5)
            end = (pos[0] + step * math.sin(ang), pos[1] + step * math.cos(ang))
            if math.hypot(end[0] - center[0], end[1] - center[1]) > keep_r:
                return  # cornered; stop this subtree
        segments.append((pos, end, width))
        pos = end
        ang += rng.uniform(-0.22, 0.22)
    if level < max_level:
        child_width = max(cfg.min_width_px, width * cfg.width_decay)
        for sign in (-1.0, 1.0):
            child = ang + sign * rng.uniform(0.35, 0.95)
            _grow(
                rng,
                segments,
                pos,
                child,
                length * cfg.len_decay * rng.uniform(0.9, 1.1),
                child_width,
                level + 1,
                max_level,
                center,
                keep_r,
                cfg,
            )


def gen_phantom(seed: int, side: int, cfg: PhantomConfig = PhantomConfig()) -> SamplePair:
    """Deterministic phantom for one seed: image, binary label, disc mask."""
    if side < 32:
        raise ValueError(f"gen_phantom: side must be >= 32, got {side}")
    rng = np.random.default_rng(seed)
    center = ((side - 1) / 2.0, (side - 1) / 2.0)
    radius = cfg.disc_radius_frac * side

    yy, xx = np.mgrid[0:side, 0:side]
    r = np.hypot(yy - center[0], xx - center[1])
    mask = (r <= radius).astype(np.float64)

    # smooth background: radial falloff plus one octave of low-frequency noise
    base = rng.uniform(*cfg.base_level)
    low = ndimage.gaussian_filter(rng.standard_normal((side, side)), sigma=side / 8.0)
    low_std = low.std()
    if low_std > 0:
        low /= low_std
    shading = base + 0.16 * np.clip(1.0 - (r / radius) ** 2, 0.0, 1.0) + 0.05 * low

    # one connected vessel tree: trunks fan out from a shared root point
    levels = int(rng.integers(cfg.min_levels, cfg.max_levels + 1))
    root_ang = rng.uniform(0.0, 2.0 * math.pi)
    root = (center[0] + 0.5 * radius * math.sin(root_ang), center[1] + 0.5 * radius * math.cos(root_ang))
    toward_center = math.atan2(center[0] - root[0], center[1] - root[1])
    width = max(cfg.min_width_px, cfg.trunk_width_frac * side)
    length = cfg.trunk_len_frac * side
    segments: list[tuple] = []
    for k in range(cfg.trunk_count):
        spread = (k - (cfg.trunk_count - 1) / 2.0) * 1.1
        direction = toward_center + spread + rng.uniform(-0.25, 0.25)
        _grow(rng, segments, root, direction, length, width, 1, levels, center, 0.92 * radius, cfg)

    coverage = np.zeros((side, side))
    for p0, p1, w in segments:
        _stamp_capsule(coverage, p0, p1, w)

    # render: vessels darker than their surroundings, light sensor noise
    contrast = rng.uniform(*cfg.contrast)
    intensity = shading * (1.0 - contrast * coverage)
    intensity = intensity + rng.normal(0.0, cfg.noise_sigma, (side, side))
    image = np.stack(
        [
            np.clip(intensity * 1.10 + 0.02, 0.0, 1.0),
            np.clip(intensity, 0.0, 1.0),
            np.clip(intensity * 0.55, 0.0, 1.0),
        ],
        axis=2,
    )
    image *= mask[:, :, None]

    label = ((coverage >= 0.5) & (mask > 0)).astype(np.float64)[:, :, None]
    return SamplePair(f"ph{seed:06d}", image, label, mask[:, :, None].copy()).validate()
