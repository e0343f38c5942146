"""Foreground-balanced split lines over binary masks.

A single salient object mask is cut into two disjoint pieces by a
(possibly tilted) straight line placed so that the object's pixels are
divided as evenly as possible. One piece plays the role of the support
annotation, the other becomes the query target.

Masks are boolean numpy arrays of shape (height, width); pixel (x, y)
lives at ``mask[y, x]``. A vertical line at column ``c`` puts every
pixel with x >= c on side A (the right side); a horizontal line at row
``c`` puts y >= c on side A (the bottom). A nonzero shift tilts the
line by moving its two endpoints ``shift`` pixels in opposite
directions around the balance coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptyMaskError

#: Inclusive bound for the tilt drawn by default: shift ~ U{-40, ..., 40}.
DEFAULT_SLOPE_RANGE = 40

#: Minimum foreground pixels each side must keep for a split to count.
DEFAULT_MIN_SIDE_PIXELS = 100

#: How many times a failed tilt is redrawn before giving up on the split.
DEFAULT_MAX_RESAMPLE = 10


class Axis(str, Enum):
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"


class Side(str, Enum):
    A = "A"
    B = "B"


class SplitMode(str, Enum):
    """Which split family to draw from.

    VSPLIT / HSPLIT always use one axis, MIXED flips a fair coin per
    episode, NONE disables splitting entirely (support and query then
    share the full mask).
    """

    VSPLIT = "vsplit"
    HSPLIT = "hsplit"
    MIXED = "mixed"
    NONE = "none"


@dataclass(frozen=True)
class SplitLine:
    """A concrete split: axis, balance coordinate and endpoint shift.

    ``balance`` is a column index for vertical lines and a row index
    for horizontal ones. ``shift`` moves the first endpoint (top row /
    left column) by +shift and the last endpoint by -shift, so the line
    pivots around the midpoint of the image.
    """

    axis: Axis
    balance: int
    shift: int = 0


@dataclass(frozen=True)
class SplitConfig:
    mode: SplitMode = SplitMode.VSPLIT
    prob: float = 0.3
    slope_enabled: bool = True
    slope_range: int = DEFAULT_SLOPE_RANGE
    alternate: bool = True
    min_side_pixels: int = DEFAULT_MIN_SIDE_PIXELS
    max_resample: int = DEFAULT_MAX_RESAMPLE

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"prob must be in [0, 1], got {self.prob}")
        if self.slope_range < 0:
            raise ValueError(f"slope_range must be >= 0, got {self.slope_range}")
        if self.min_side_pixels < 0:
            raise ValueError("min_side_pixels must be >= 0")
        if self.max_resample < 0:
            raise ValueError("max_resample must be >= 0")


@dataclass(frozen=True)
class SplitOutcome:
    """Result of attempting a split on one mask.

    When ``applied`` is false (probability gate, NONE mode, or no
    admissible tilt found) both ``support_fg`` and ``query_fg`` are the
    full input mask and ``line`` is None; ``fallback`` distinguishes
    the no-admissible-tilt case from the plain gate. When applied, the
    two arrays partition the mask's foreground exactly and ``swapped``
    records whether the side roles were exchanged by the alternation
    coin.
    """

    applied: bool
    support_fg: np.ndarray
    query_fg: np.ndarray
    line: SplitLine | None = None
    swapped: bool = False
    fallback: bool = False


def _require_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != np.bool_:
        mask = mask.astype(bool)
    return mask


def foreground_count(mask) -> int:
    """Number of true pixels in a binary mask."""
    return int(np.count_nonzero(_require_mask(mask)))


def balance_coordinate(mask, axis: Axis) -> int:
    """Coordinate that divides the mask's foreground most evenly.

    For the vertical axis, returns the smallest column index c in
    [0, width] minimising |#{foreground with x < c} - total/2|; the
    horizontal axis does the same over rows. Note c may equal the
    extent, meaning every foreground pixel sits strictly before the
    line.

    Raises:
        EmptyMaskError: if the mask has no foreground at all.
    """
    mask = _require_mask(mask)
    total = int(np.count_nonzero(mask))
    if total == 0:
        raise EmptyMaskError("cannot place a balanced line on an empty mask")
    per_coord = np.count_nonzero(mask, axis=0 if axis is Axis.VERTICAL else 1)
    # before[c] = number of foreground pixels with coordinate < c, c in [0, extent]
    before = np.concatenate(([0], np.cumsum(per_coord)))
    imbalance = np.abs(before - total / 2.0)
    return int(np.argmin(imbalance))  # argmin takes the first (smallest) minimiser


def sample_split_line(mask, axis: Axis, config: SplitConfig, rng: np.random.Generator) -> SplitLine:
    """Draw one candidate split line for the given axis.

    The balance coordinate is deterministic; the endpoint shift is a
    uniform integer in [-slope_range, slope_range] when tilting is
    enabled, else 0.
    """
    c = balance_coordinate(mask, axis)
    shift = 0
    if config.slope_enabled and config.slope_range > 0:
        shift = int(rng.integers(-config.slope_range, config.slope_range + 1))
    return SplitLine(axis=axis, balance=c, shift=shift)


def _boundary_values(line: SplitLine, width: int, height: int) -> np.ndarray:
    """Boundary coordinate as a function of the perpendicular coordinate.

    Vertical lines vary with the row: b(y) = c + s - (2s / (H-1)) * y,
    degenerating to the constant c when H == 1. Horizontal lines use
    the mirror-image formula over columns. The returned vector has one
    entry per row (vertical) or per column (horizontal).
    """
    c, s = line.balance, line.shift
    n = height if line.axis is Axis.VERTICAL else width
    if s == 0 or n <= 1:
        return np.full(n, float(c))
    t = np.arange(n, dtype=np.float64)
    return c + s - (2.0 * s / (n - 1)) * t


def side_a_field(line: SplitLine, width: int, height: int) -> np.ndarray:
    """Boolean (height, width) grid, true where a pixel falls on side A.

    Side A is the right side for vertical lines and the bottom for
    horizontal ones: pixel (x, y) is on side A iff its coordinate along
    the split axis is >= the boundary value at its perpendicular
    coordinate.
    """
    b = _boundary_values(line, width, height)
    if line.axis is Axis.VERTICAL:
        return np.arange(width)[None, :] >= b[:, None]
    return np.arange(height)[:, None] >= b[None, :]


def side_of(line: SplitLine, x: int, y: int, width: int, height: int) -> Side:
    """Which side of the line a single pixel falls on.

    Raises:
        ValueError: if (x, y) is outside the width x height grid.
    """
    if not (0 <= x < width and 0 <= y < height):
        raise ValueError(f"pixel ({x}, {y}) outside {width}x{height} grid")
    b = _boundary_values(line, width, height)
    coord, idx = (x, y) if line.axis is Axis.VERTICAL else (y, x)
    return Side.A if coord >= b[idx] else Side.B


def partition_mask(mask, line: SplitLine) -> tuple[np.ndarray, np.ndarray]:
    """Cut a mask's foreground into its side-A and side-B pieces.

    Every foreground pixel lands in exactly one of the two returned
    masks; background stays background in both.

    Raises:
        EmptyMaskError: if the mask has no foreground.
    """
    mask = _require_mask(mask)
    if not mask.any():
        raise EmptyMaskError("cannot partition an empty mask")
    h, w = mask.shape
    a = side_a_field(line, w, h)
    return mask & a, mask & ~a


def apply_split(mask, config: SplitConfig, rng: np.random.Generator) -> SplitOutcome:
    """Run the full stochastic split policy on one mask.

    Draw order (fixed so results are reproducible from the rng state):
    application coin, axis coin (MIXED only), one endpoint shift per
    placement attempt, alternation coin. A placement is accepted only
    if both sides keep at least ``min_side_pixels`` foreground pixels;
    with tilting enabled the shift is redrawn up to ``max_resample``
    times, after which the episode falls back to no split rather than
    emitting a degenerate side.

    By default side A (right / bottom) is the support piece; when
    ``alternate`` is set a fair coin swaps the roles per call.

    Raises:
        EmptyMaskError: if the mask has no foreground.
    """
    mask = _require_mask(mask)
    if not mask.any():
        raise EmptyMaskError("cannot split an empty mask")

    if config.mode is SplitMode.NONE or config.prob <= 0.0 or rng.random() >= config.prob:
        return SplitOutcome(applied=False, support_fg=mask, query_fg=mask)

    if config.mode is SplitMode.MIXED:
        axis = Axis.VERTICAL if rng.random() < 0.5 else Axis.HORIZONTAL
    else:
        axis = Axis.VERTICAL if config.mode is SplitMode.VSPLIT else Axis.HORIZONTAL

    variable_shift = config.slope_enabled and config.slope_range > 0
    attempts = 1 + (config.max_resample if variable_shift else 0)
    accepted = None
    for _ in range(attempts):
        line = sample_split_line(mask, axis, config, rng)
        side_a, side_b = partition_mask(mask, line)
        if min(foreground_count(side_a), foreground_count(side_b)) >= config.min_side_pixels:
            accepted = (line, side_a, side_b)
            break

    if accepted is None:
        return SplitOutcome(applied=False, support_fg=mask, query_fg=mask, fallback=True)

    line, side_a, side_b = accepted
    swapped = bool(config.alternate and rng.random() < 0.5)
    support, query = (side_b, side_a) if swapped else (side_a, side_b)
    return SplitOutcome(applied=True, support_fg=support, query_fg=query, line=line, swapped=swapped)
