"""Embedding-based grounding engine over precomputed embeddings.

Computes text-patch interaction matrices and masked col-scores, the
contrastive loss in both its InfoCE and softplus forms with analytic
gradients, adjacent-patch embedding merging, patch similarity vectors,
and 2-level top-k patch selection. Embeddings are loaded from TRIGEMB v1
files; producing them (an MLLM encoder) is out of scope, as is the
training loop itself.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .geometry import BBox, PatchGrid, PatchMask, patch_rect, pixel_iou


class EmptyMaskError(ValueError):
    """Col-score restricted to a mask with no set bits."""


class TrigembFormatError(ValueError):
    """Malformed TRIGEMB embedding file."""


@dataclass
class EmbeddingSet:
    """One sample's image-patch embedding grid plus text-token embeddings.

    ``image`` is (rows*cols, D) row-major over the grid; ``text`` is
    (l_text, D). Arrays are held as contiguous float64 and must be finite.
    """

    grid: PatchGrid
    image: np.ndarray
    text: np.ndarray

    def __post_init__(self) -> None:
        self.image = np.ascontiguousarray(self.image, dtype=np.float64)
        self.text = np.ascontiguousarray(self.text, dtype=np.float64)
        if self.image.ndim != 2 or self.image.shape[0] != self.grid.patch_count:
            raise ValueError("image embeddings must be (rows*cols, D)")
        if self.text.ndim != 2 or self.text.shape[0] < 1:
            raise ValueError("need at least one text embedding")
        if self.text.shape[1] != self.image.shape[1]:
            raise ValueError("text and image embedding widths differ")
        if not np.isfinite(self.image).all() or not np.isfinite(self.text).all():
            raise ValueError("embeddings must be finite")

    @property
    def dim(self) -> int:
        return self.image.shape[1]


@dataclass
class InteractionMatrix:
    """Text-by-patch dot products plus the patch mask to score against."""

    x: np.ndarray
    mask: PatchMask

    def __post_init__(self) -> None:
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ValueError("interaction matrix must be 2-D")
        if self.x.shape[1] != self.mask.grid.patch_count:
            raise ValueError("interaction width must equal rows*cols of the mask grid")
        if not np.isfinite(self.x).all():
            raise ValueError("interaction matrix must be finite")

    def with_mask(self, mask: PatchMask) -> "InteractionMatrix":
        return InteractionMatrix(self.x, mask)


@dataclass(frozen=True)
class SelectConfig:
    """Patch-selection parameters; defaults are the best ablation setting."""

    k1: int = 5
    k2: int = 30
    merge_window: int = 3
    seed_only_adjacency: bool = False

    def __post_init__(self) -> None:
        if self.k1 < 0 or self.k2 < self.k1:
            raise ValueError("need 0 <= k1 <= k2")
        if self.merge_window < 1 or self.merge_window % 2 == 0:
            raise ValueError("merge window must be odd and >= 1")


@dataclass(frozen=True)
class LossConfig:
    tau: float = 1.0

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("temperature must be positive")


def interaction(e: EmbeddingSet, mask: PatchMask | None = None) -> InteractionMatrix:
    """Interaction matrix X[i, j] = dot(text_i, patch_j); mask defaults to all-ones."""
    x = e.text @ e.image.T
    if mask is None:
        mask = PatchMask.full(e.grid)
    return InteractionMatrix(x, mask)


def col_score(m: InteractionMatrix) -> float:
    """Masked col-score: sum over text rows of the row max over masked patches."""
    if not m.mask.bits.any():
        raise EmptyMaskError("empty mask")
    return float(_kernels.col_score(m.x, m.mask.bits.view(np.uint8)))


def _require_unmasked(x_neg: InteractionMatrix) -> None:
    if not x_neg.mask.bits.all():
        raise ValueError("negative interaction must carry an all-ones mask")


def _score_pair(x_pos: InteractionMatrix, x_neg: InteractionMatrix) -> tuple[float, float]:
    _require_unmasked(x_neg)
    return col_score(x_pos), col_score(x_neg)


def infoce_loss(
    x_pos: InteractionMatrix,
    x_neg: InteractionMatrix,
    cfg: LossConfig = LossConfig(),
) -> float:
    """Contrastive loss over one positive (masked) and one negative pair.

    -log(e^{s+/tau} / (e^{s+/tau} + e^{s-/tau})), evaluated in
    log-sum-exp form for stability.
    """
    s_pos, s_neg = _score_pair(x_pos, x_neg)
    return float(np.logaddexp(0.0, (s_neg - s_pos) / cfg.tau))


def softplus_loss(
    x_pos: InteractionMatrix,
    x_neg: InteractionMatrix,
    swap_masks: bool = False,
) -> float:
    """Single-negative simplification: softplus(s(X-, 1) - s(X+, M)).

    ``swap_masks`` applies the grounding mask to the negative pair and
    scores the positive unmasked instead — a compatibility reading kept
    for comparison only.
    """
    if swap_masks:
        if x_pos.mask.grid.patch_count != x_neg.mask.grid.patch_count:
            raise ValueError("mask grids differ; cannot swap")
        s_neg = col_score(x_neg.with_mask(x_pos.mask))
        s_pos = col_score(x_pos.with_mask(x_neg.mask))
        return float(np.logaddexp(0.0, s_neg - s_pos))
    s_pos, s_neg = _score_pair(x_pos, x_neg)
    return float(np.logaddexp(0.0, s_neg - s_pos))


def _sigmoid(z: float) -> float:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_grad(
    x_pos: InteractionMatrix, x_neg: InteractionMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of the softplus loss w.r.t. both matrices.

    Each row contributes through its (masked) maximum only, so each
    gradient has exactly one nonzero per row: -sigmoid(s- - s+) at the
    positive's masked argmax, +sigmoid(s- - s+) at the negative's argmax.
    Ties are broken by lowest index; callers perturb genuine ties.
    """
    s_pos, s_neg = _score_pair(x_pos, x_neg)
    sigma = _sigmoid(s_neg - s_pos)

    g_pos = np.zeros_like(x_pos.x)
    masked = np.where(x_pos.mask.bits[None, :], x_pos.x, -np.inf)
    rows = np.arange(x_pos.x.shape[0])
    g_pos[rows, masked.argmax(axis=1)] = -sigma

    g_neg = np.zeros_like(x_neg.x)
    rows = np.arange(x_neg.x.shape[0])
    g_neg[rows, x_neg.x.argmax(axis=1)] = sigma
    return g_pos, g_neg


def merge_embeddings(e: EmbeddingSet, w: int) -> EmbeddingSet:
    """Replace each patch embedding with its in-bounds w×w window mean.

    Window truncation at the borders means the divisor varies per patch;
    text embeddings are untouched. w=1 is the identity.
    """
    merged = _kernels.merge_mean(e.image, e.grid.rows, e.grid.cols, w)
    return replace(e, image=merged)


def similarity(e: EmbeddingSet) -> np.ndarray:
    """Per-patch mean dot product against all text tokens."""
    return (e.image @ e.text.T).mean(axis=1)


def two_level_select(
    sim: np.ndarray, grid: PatchGrid, cfg: SelectConfig = SelectConfig()
) -> list[int]:
    """Top-k1 seeds extended by 8-adjacent patches from the top-k2 pool.

    Candidates are scanned in descending similarity (ties by lowest
    index); by default the selected set grows during the scan, or only
    the seeds count as anchors with ``seed_only_adjacency``. Returns
    sorted patch indices.
    """
    if cfg.k1 > grid.patch_count:
        raise ValueError("k1 exceeds patch count")
    return _kernels.two_level_select(
        np.asarray(sim, dtype=np.float64),
        grid.rows,
        grid.cols,
        cfg.k1,
        cfg.k2,
        not cfg.seed_only_adjacency,
    )


@dataclass
class GroundResult:
    selected_indices: list[int]
    boxes: list[BBox]
    pixel_iou: float | None


def ground(
    e: EmbeddingSet,
    cfg: SelectConfig = SelectConfig(),
    gt_boxes: list[BBox] | None = None,
) -> GroundResult:
    """Full grounding pipeline: merge, similarity, select, patch rectangles."""
    merged = merge_embeddings(e, cfg.merge_window)
    sim = similarity(merged)
    selected = two_level_select(sim, e.grid, cfg)
    boxes = [
        patch_rect(idx // e.grid.cols, idx % e.grid.cols, e.grid) for idx in selected
    ]
    iou = None if gt_boxes is None else pixel_iou(boxes, gt_boxes)
    return GroundResult(selected, boxes, iou)


# --- TRIGEMB v1 embedding files -------------------------------------------
#
# Binary, little-endian: magic "TRIG", u32 fields [version=1, rows, cols,
# l_text, D], then rows*cols*D float32 image embeddings (grid row-major,
# innermost D), then l_text*D float32 text embeddings. One file per
# sample, named <sample_id>.trigemb. Image pixel dimensions are not
# stored; readers take them from the benchmark record.

TRIGEMB_MAGIC = b"TRIG"
TRIGEMB_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


def write_embeddings(path: str | Path, e: EmbeddingSet) -> None:
    """Write an EmbeddingSet as a TRIGEMB v1 file (float32 payload)."""
    header = _HEADER.pack(
        TRIGEMB_MAGIC,
        TRIGEMB_VERSION,
        e.grid.rows,
        e.grid.cols,
        e.text.shape[0],
        e.dim,
    )
    image = e.image.astype("<f4").tobytes()
    text = e.text.astype("<f4").tobytes()
    Path(path).write_bytes(header + image + text)


def read_embeddings(path: str | Path, image_size: tuple[int, int]) -> EmbeddingSet:
    """Read a TRIGEMB v1 file; ``image_size`` supplies the pixel dimensions."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TrigembFormatError(
            f"truncated header: {len(data)} bytes, need {_HEADER.size}"
        )
    magic, version, rows, cols, l_text, dim = _HEADER.unpack_from(data)
    if magic != TRIGEMB_MAGIC:
        raise TrigembFormatError(f"bad magic {magic!r}")
    if version != TRIGEMB_VERSION:
        raise TrigembFormatError(f"unsupported version {version}")
    if min(rows, cols, l_text, dim) < 1:
        raise TrigembFormatError("zero dimension in header")

    image_count = rows * cols * dim
    need = (image_count + l_text * dim) * 4
    body = data[_HEADER.size :]
    if len(body) < need:
        raise TrigembFormatError(
            f"truncated payload: {len(body)} bytes, need {need}"
        )
    if len(body) > need:
        raise TrigembFormatError(
            f"trailing data after payload: {len(body) - need} extra bytes"
        )
    image = np.frombuffer(body, dtype="<f4", count=image_count).reshape(
        rows * cols, dim
    )
    text = np.frombuffer(
        body, dtype="<f4", count=l_text * dim, offset=image_count * 4
    ).reshape(l_text, dim)
    image_w, image_h = image_size
    grid = PatchGrid(image_w=image_w, image_h=image_h, rows=rows, cols=cols)
    return EmbeddingSet(grid, image, text)
