"""Paired image/mask augmentations for episode views.

Geometry is applied identically to an image and every mask that rides
along with it, in a fixed order: scale, rotate about the image centre,
horizontal flip, vertical flip, then centre-crop or zero-pad onto a
square output canvas. Images interpolate bilinearly, masks use nearest
neighbour and stay strictly binary; pixels rotated in from outside the
frame are filled with zeros (background).

Photometric changes touch only the image: brightness, contrast,
saturation, hue (each clamped to [0, 255] as it lands), then an
optional collapse to replicated grayscale. Default parameter ranges
follow the usual contrastive-learning jitter recipe.
"""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DimensionMismatchError

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class GeometricParams:
    hflip: bool = False
    vflip: bool = False
    angle: float = 0.0
    scale: float = 1.0

    def is_identity(self) -> bool:
        return not self.hflip and not self.vflip and self.angle == 0.0 and self.scale == 1.0


@dataclass(frozen=True)
class PhotometricParams:
    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0
    hue_shift: float = 0.0
    to_grayscale: bool = False

    def is_identity(self) -> bool:
        return (
            self.brightness == 1.0
            and self.contrast == 1.0
            and self.saturation == 1.0
            and self.hue_shift == 0.0
            and not self.to_grayscale
        )


IDENTITY_GEOMETRIC = GeometricParams()
IDENTITY_PHOTOMETRIC = PhotometricParams()


@dataclass(frozen=True)
class AugmentationSpec:
    """Sampling ranges for one view's augmentation draw.

    ``enabled=False`` short-circuits everything to the identity, which
    is also what the generation fallback uses when repeated draws keep
    destroying too much mask foreground.
    """

    enabled: bool = True
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    angle_range: tuple[float, float] = (-30.0, 30.0)
    scale_range: tuple[float, float] = (0.75, 1.25)
    jitter_prob: float = 0.8
    brightness_range: tuple[float, float] = (0.6, 1.4)
    contrast_range: tuple[float, float] = (0.6, 1.4)
    saturation_range: tuple[float, float] = (0.6, 1.4)
    hue_range: tuple[float, float] = (-0.1, 0.1)
    grayscale_prob: float = 0.2

    def __post_init__(self):
        for name in ("hflip_prob", "vflip_prob", "jitter_prob", "grayscale_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        for name in ("angle_range", "scale_range", "brightness_range",
                     "contrast_range", "saturation_range", "hue_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is inverted: ({lo}, {hi})")
        if self.scale_range[0] <= 0:
            raise ValueError("scale_range must be positive")


def _uniform(rng, lo, hi) -> float:
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


def sample_augmentation(spec: AugmentationSpec, rng: np.random.Generator):
    """Draw one (geometric, photometric) parameter pair.

    The draw order is fixed (flips, angle, scale, jitter gate, jitter
    factors, grayscale gate) so identical rng states give identical
    parameters.
    """
    if not spec.enabled:
        return IDENTITY_GEOMETRIC, IDENTITY_PHOTOMETRIC
    geo = GeometricParams(
        hflip=bool(rng.random() < spec.hflip_prob),
        vflip=bool(rng.random() < spec.vflip_prob),
        angle=_uniform(rng, *spec.angle_range),
        scale=_uniform(rng, *spec.scale_range),
    )
    if rng.random() < spec.jitter_prob:
        photo = PhotometricParams(
            brightness=_uniform(rng, *spec.brightness_range),
            contrast=_uniform(rng, *spec.contrast_range),
            saturation=_uniform(rng, *spec.saturation_range),
            hue_shift=_uniform(rng, *spec.hue_range),
            to_grayscale=bool(rng.random() < spec.grayscale_prob),
        )
    else:
        photo = PhotometricParams(to_grayscale=bool(rng.random() < spec.grayscale_prob))
    return geo, photo


def _fit_canvas(arr: np.ndarray, out_size: int) -> np.ndarray:
    """Centre-crop and/or zero-pad each axis onto an out_size square."""
    h, w = arr.shape[:2]
    if h == out_size and w == out_size:
        return arr
    out = np.zeros((out_size, out_size) + arr.shape[2:], dtype=arr.dtype)
    if h >= out_size:
        sy, dy, ch = (h - out_size) // 2, 0, out_size
    else:
        sy, dy, ch = 0, (out_size - h) // 2, h
    if w >= out_size:
        sx, dx, cw = (w - out_size) // 2, 0, out_size
    else:
        sx, dx, cw = 0, (out_size - w) // 2, w
    out[dy:dy + ch, dx:dx + cw] = arr[sy:sy + ch, sx:sx + cw]
    return out


def _warp(arr: np.ndarray, params: GeometricParams, out_size: int, interp: int) -> np.ndarray:
    if params.scale != 1.0:
        h, w = arr.shape[:2]
        new_w = max(1, int(round(w * params.scale)))
        new_h = max(1, int(round(h * params.scale)))
        arr = cv2.resize(arr, (new_w, new_h), interpolation=interp)
    if params.angle != 0.0:
        h, w = arr.shape[:2]
        # (w-1)/2 centre keeps right-angle rotations on the pixel grid
        m = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), params.angle, 1.0)
        arr = cv2.warpAffine(arr, m, (w, h), flags=interp,
                             borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    if params.hflip:
        arr = arr[:, ::-1]
    if params.vflip:
        arr = arr[::-1, :]
    return np.ascontiguousarray(_fit_canvas(arr, out_size))


def apply_geometric(image: np.ndarray, params: GeometricParams, out_size: int) -> np.ndarray:
    """Geometrically transform an RGB uint8 image onto the output canvas."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    return _warp(image, params, out_size, cv2.INTER_LINEAR)


def apply_geometric_mask(mask: np.ndarray, params: GeometricParams, out_size: int) -> np.ndarray:
    """Transform a binary mask with the same geometry as its image.

    Nearest-neighbour throughout, zero fill, so the result is exactly
    binary — no interpolated in-between values at object borders.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {mask.shape}")
    warped = _warp(mask.astype(np.uint8), params, out_size, cv2.INTER_NEAREST)
    return warped > 0


def apply_photometric(image: np.ndarray, params: PhotometricParams) -> np.ndarray:
    """Colour-jitter an RGB uint8 image; geometry untouched.

    Order: brightness, contrast, saturation, hue, grayscale. Values are
    clamped to [0, 255] after every step, and steps whose factor is the
    identity are skipped entirely, so identity params return the input
    bit-for-bit.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    img = image.astype(np.float64)
    if params.brightness != 1.0:
        img = np.clip(img * params.brightness, 0.0, 255.0)
    if params.contrast != 1.0:
        mean = float((img @ _LUMA).mean())
        img = np.clip((img - mean) * params.contrast + mean, 0.0, 255.0)
    if params.saturation != 1.0:
        gray = (img @ _LUMA)[..., None]
        img = np.clip(gray + (img - gray) * params.saturation, 0.0, 255.0)
    if params.hue_shift != 0.0:
        hsv = cv2.cvtColor((img / 255.0).astype(np.float32), cv2.COLOR_RGB2HSV)
        hsv[..., 0] = (hsv[..., 0] + params.hue_shift * 360.0) % 360.0
        rgb = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB).astype(np.float64) * 255.0
        img = np.clip(rgb, 0.0, 255.0)
    if params.to_grayscale:
        img = np.repeat((img @ _LUMA)[..., None], 3, axis=2)
    return np.rint(img).astype(np.uint8)


def augment_view(image: np.ndarray, masks, spec: AugmentationSpec,
                 rng: np.random.Generator, out_size: int):
    """Produce one augmented view of an image and its masks.

    A single parameter pair is drawn; the geometric half is applied to
    the image and to every mask (so their spatial correspondence
    survives), the photometric half to the image alone.

    Args:
        image: (H, W, 3) uint8 RGB array.
        masks: iterable of (H, W) binary masks sharing the image's size.
        spec: sampling ranges; ``enabled=False`` gives the identity view.
        rng: numpy Generator consumed by the parameter draw.
        out_size: side of the square output canvas.

    Returns:
        (image', [mask', ...]) at out_size x out_size.

    Raises:
        DimensionMismatchError: if any mask's shape differs from the image's.
    """
    masks = list(masks)
    for m in masks:
        if m.shape[:2] != image.shape[:2]:
            raise DimensionMismatchError(
                f"mask shape {m.shape[:2]} does not match image {image.shape[:2]}")
    geo, photo = sample_augmentation(spec, rng)
    out_image = apply_photometric(apply_geometric(image, geo, out_size), photo)
    out_masks = [apply_geometric_mask(m, geo, out_size) for m in masks]
    return out_image, out_masks
