"""Exact rectangle arithmetic over half-open integer pixel regions.

Boxes cover [x1, x2) x [y1, y2), so areas are exact integer pixel counts
and abutting boxes do not overlap. Set-level areas (unions, intersections)
are computed by coordinate compression, never by rasterization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import _kernels


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned rectangle in half-open integer pixel coordinates."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self) -> None:
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not isinstance(v, int):
                raise TypeError(f"box coordinates must be integers, got {v!r}")
        if self.x1 < 0 or self.y1 < 0:
            raise ValueError(f"box origin must be non-negative: {self.astuple()}")
        if self.x1 >= self.x2 or self.y1 >= self.y2:
            raise ValueError(f"zero-area box rejected: {self.astuple()}")

    def astuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1


@dataclass(frozen=True)
class RelBox:
    """Rectangle as fractions of image width/height on a declared scale.

    Some model families emit coordinates on a 0-1000 scale; ``scale``
    declares the denominator (default 1.0).
    """

    rx1: float
    ry1: float
    rx2: float
    ry2: float
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not (0 <= self.rx1 < self.rx2 <= self.scale):
            raise ValueError(f"invalid relative x range: {self.rx1}..{self.rx2}")
        if not (0 <= self.ry1 < self.ry2 <= self.scale):
            raise ValueError(f"invalid relative y range: {self.ry1}..{self.ry2}")


@dataclass(frozen=True)
class PatchGrid:
    """A rows x cols patch tiling of an image_w x image_h image."""

    image_w: int
    image_h: int
    rows: int = 32
    cols: int = 32

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and column")
        if self.image_w < self.cols or self.image_h < self.rows:
            raise ValueError("image must be at least one pixel per patch")

    @property
    def patch_count(self) -> int:
        return self.rows * self.cols


@dataclass(eq=False)
class PatchMask:
    """One boolean per patch, row-major over the grid."""

    grid: PatchGrid
    bits: np.ndarray

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=bool).ravel()
        if self.bits.shape[0] != self.grid.patch_count:
            raise ValueError("mask length must equal rows*cols")

    @classmethod
    def full(cls, grid: PatchGrid) -> "PatchMask":
        return cls(grid, np.ones(grid.patch_count, dtype=bool))

    @classmethod
    def empty(cls, grid: PatchGrid) -> "PatchMask":
        return cls(grid, np.zeros(grid.patch_count, dtype=bool))

    def count(self) -> int:
        return int(self.bits.sum())

    def indices(self) -> list[int]:
        return np.flatnonzero(self.bits).tolist()


class RegionAreas(NamedTuple):
    pred: int
    gt: int
    intersection: int
    union: int


def area(b: BBox) -> int:
    """Pixel count of a box."""
    return b.width * b.height


def intersect(a: BBox, b: BBox) -> BBox | None:
    """Overlap rectangle of two boxes, or None when the overlap is empty."""
    x1 = max(a.x1, b.x1)
    y1 = max(a.y1, b.y1)
    x2 = min(a.x2, b.x2)
    y2 = min(a.y2, b.y2)
    if x1 >= x2 or y1 >= y2:
        return None
    return BBox(x1, y1, x2, y2)


def boxes_to_array(boxes: Iterable[BBox]) -> np.ndarray:
    """Pack boxes into an int64 (n, 4) array for the kernels."""
    return np.array(
        [b.astuple() for b in boxes], dtype=np.int64
    ).reshape(-1, 4)


def region_areas(pred: Iterable[BBox], gt: Iterable[BBox]) -> RegionAreas:
    """Exact pixel areas of the two unions, their intersection and union.

    Duplicate and overlapping rectangles within a set count each pixel
    once. Deterministic and resolution-independent; either set may be
    empty.
    """
    a_pred, a_gt, a_inter, a_union = _kernels.region_areas(
        boxes_to_array(pred), boxes_to_array(gt)
    )
    return RegionAreas(int(a_pred), int(a_gt), int(a_inter), int(a_union))


def pixel_iou(pred: Iterable[BBox], gt: Iterable[BBox]) -> float:
    """Pixel-level IoU of two rectangle-set unions.

    Returns 0.0 when both sets are empty; callers that need to distinguish
    that degenerate case flag it in the per-sample record.
    """
    areas = region_areas(pred, gt)
    if areas.union == 0:
        return 0.0
    return areas.intersection / areas.union


def round_half_away(v: float) -> int:
    """Round to nearest integer with halves away from zero."""
    return math.floor(v + 0.5) if v >= 0 else math.ceil(v - 0.5)


def rel_to_abs(r: RelBox, image_size: tuple[int, int]) -> BBox:
    """Convert a relative box to absolute pixels.

    Coordinates are scaled, rounded half away from zero, and clamped to
    the image bounds. Raises ValueError("degenerate box") when rounding
    collapses the box.
    """
    image_w, image_h = image_size
    x1 = min(max(round_half_away(r.rx1 * image_w / r.scale), 0), image_w)
    x2 = min(max(round_half_away(r.rx2 * image_w / r.scale), 0), image_w)
    y1 = min(max(round_half_away(r.ry1 * image_h / r.scale), 0), image_h)
    y2 = min(max(round_half_away(r.ry2 * image_h / r.scale), 0), image_h)
    if x1 >= x2 or y1 >= y2:
        raise ValueError(f"degenerate box after rounding: ({x1},{y1},{x2},{y2})")
    return BBox(x1, y1, x2, y2)


def patch_rect(row: int, col: int, grid: PatchGrid) -> BBox:
    """Pixel rectangle of one patch.

    Patch boundaries are floor(k*dim/count), so the rectangles tile the
    image exactly with no gaps or overlaps.
    """
    if not (0 <= row < grid.rows and 0 <= col < grid.cols):
        raise IndexError(f"patch ({row},{col}) outside {grid.rows}x{grid.cols} grid")
    x1 = col * grid.image_w // grid.cols
    x2 = (col + 1) * grid.image_w // grid.cols
    y1 = row * grid.image_h // grid.rows
    y2 = (row + 1) * grid.image_h // grid.rows
    return BBox(x1, y1, x2, y2)


def boxes_to_patch_mask(boxes: Iterable[BBox], grid: PatchGrid) -> PatchMask:
    """Mask of patches whose rectangle overlaps any box with positive area."""
    xb = (np.arange(grid.cols + 1, dtype=np.int64) * grid.image_w) // grid.cols
    yb = (np.arange(grid.rows + 1, dtype=np.int64) * grid.image_h) // grid.rows
    bits = np.zeros((grid.rows, grid.cols), dtype=bool)
    for b in boxes:
        # patch k spans [b[k], b[k+1]); overlap iff b[k] < hi and b[k+1] > lo
        c_lo = int(np.searchsorted(xb[1:], b.x1, side="right"))
        c_hi = int(np.searchsorted(xb[:-1], b.x2, side="left"))
        r_lo = int(np.searchsorted(yb[1:], b.y1, side="right"))
        r_hi = int(np.searchsorted(yb[:-1], b.y2, side="left"))
        bits[r_lo:r_hi, c_lo:c_hi] = True
    return PatchMask(grid, bits.ravel())
