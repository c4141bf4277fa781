"""Pure-Python implementations of the numeric kernels.

Used when the compiled extension is unavailable. Each function mirrors its
Cython counterpart exactly, including float accumulation order, so the two
backends are interchangeable.
"""

from __future__ import annotations

import numpy as np


def region_areas(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int, int]:
    """Exact pixel areas of two rectangle-set regions and their overlap.

    ``pred`` and ``gt`` are int64 arrays of shape (n, 4) holding half-open
    boxes (x1, y1, x2, y2). Returns (area_pred, area_gt, area_intersection,
    area_union) via coordinate compression — no rasterization.
    """
    pred = np.asarray(pred, dtype=np.int64).reshape(-1, 4)
    gt = np.asarray(gt, dtype=np.int64).reshape(-1, 4)
    if pred.shape[0] == 0 and gt.shape[0] == 0:
        return 0, 0, 0, 0

    both = np.concatenate([pred, gt], axis=0)
    xs = np.unique(both[:, [0, 2]])
    ys = np.unique(both[:, [1, 3]])
    nx = xs.shape[0] - 1
    ny = ys.shape[0] - 1

    pred_cov = np.zeros((nx, ny), dtype=bool)
    gt_cov = np.zeros((nx, ny), dtype=bool)
    for boxes, cov in ((pred, pred_cov), (gt, gt_cov)):
        for x1, y1, x2, y2 in boxes:
            i1 = int(np.searchsorted(xs, x1))
            i2 = int(np.searchsorted(xs, x2))
            j1 = int(np.searchsorted(ys, y1))
            j2 = int(np.searchsorted(ys, y2))
            cov[i1:i2, j1:j2] = True

    cell = np.diff(xs)[:, None] * np.diff(ys)[None, :]
    area_pred = int(cell[pred_cov].sum())
    area_gt = int(cell[gt_cov].sum())
    area_inter = int(cell[pred_cov & gt_cov].sum())
    area_union = int(cell[pred_cov | gt_cov].sum())
    return area_pred, area_gt, area_inter, area_union


def merge_mean(emb: np.ndarray, rows: int, cols: int, w: int) -> np.ndarray:
    """Window-mean over a patch grid.

    ``emb`` is float64 of shape (rows*cols, D), row-major over the grid.
    Each patch becomes the mean of the in-bounds w×w window centred on it
    (window truncated at the borders, so the divisor varies per patch).
    """
    emb = np.ascontiguousarray(emb, dtype=np.float64)
    n, dim = emb.shape
    if n != rows * cols:
        raise ValueError("embedding count does not match grid")
    if w < 1 or w % 2 == 0:
        raise ValueError("window must be odd and >= 1")

    grid = emb.reshape(rows, cols, dim)
    acc = np.zeros_like(grid)
    cnt = np.zeros((rows, cols, 1), dtype=np.float64)
    half = w // 2
    # Offsets visited in row-major order: per-patch addition sequence then
    # matches the compiled kernel's inner loop bit-for-bit.
    for dr in range(-half, half + 1):
        r0, r1 = max(0, -dr), min(rows, rows - dr)
        for dc in range(-half, half + 1):
            c0, c1 = max(0, -dc), min(cols, cols - dc)
            acc[r0:r1, c0:c1] += grid[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
            cnt[r0:r1, c0:c1] += 1.0
    return (acc / cnt).reshape(n, dim)


def col_score(x: np.ndarray, mask: np.ndarray) -> float:
    """Sum over rows of the row maximum restricted to masked columns."""
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool).ravel()
    if not mask.any():
        raise ValueError("empty mask")
    maxima = np.where(mask[None, :], x, -np.inf).max(axis=1)
    total = 0.0
    for v in maxima.tolist():  # sequential sum, matching the compiled kernel
        total += v
    return total


def two_level_select(
    sim: np.ndarray,
    rows: int,
    cols: int,
    k1: int,
    k2: int,
    growing: bool = True,
) -> list[int]:
    """Seed with the top-k1 patches, then admit top-k2 patches by adjacency.

    Candidates are scanned in descending similarity (ties broken by lowest
    index) and admitted when 8-adjacent to the selected set; with
    ``growing`` the set grows during the scan, otherwise adjacency is
    tested against the seeds only. Returns sorted patch indices.
    """
    sim = np.asarray(sim, dtype=np.float64).ravel()
    n = sim.shape[0]
    if n != rows * cols:
        raise ValueError("similarity length does not match grid")
    k1 = min(k1, n)
    k2 = min(max(k2, k1), n)

    order = np.argsort(-sim, kind="stable")
    selected = np.zeros(n, dtype=bool)
    seeds = np.zeros(n, dtype=bool)
    for idx in order[:k1].tolist():
        selected[idx] = True
        seeds[idx] = True

    base = selected if growing else seeds
    for idx in order[k1:k2].tolist():
        r, c = divmod(idx, cols)
        admitted = False
        for dr in (-1, 0, 1):
            rr = r + dr
            if rr < 0 or rr >= rows:
                continue
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                cc = c + dc
                if 0 <= cc < cols and base[rr * cols + cc]:
                    admitted = True
                    break
            if admitted:
                break
        if admitted:
            selected[idx] = True

    return np.flatnonzero(selected).tolist()
