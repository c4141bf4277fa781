"""Parsers and serializers for model responses carrying boxes or indices.

Three box formats are supported (CSS pixel properties, absolute
coordinate lists, relative coordinate lists) plus the comma-separated
index-selection protocol. Parsers never raise on arbitrary text: groups
that fail validation are dropped and counted in the result's diagnostics.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .geometry import BBox, RelBox, rel_to_abs, round_half_away


class ResponseFormat(str, Enum):
    """Wire format a model was instructed to answer in."""

    CSS_ABSOLUTE = "css"
    LIST_ABSOLUTE = "abs"
    LIST_RELATIVE = "rel"
    INDEX_SELECTION = "indices"


@dataclass
class ParsedResponse:
    """Answer text plus extracted boxes (Setting 1) or indices (Settings 2/3).

    ``dropped`` counts groups that matched the grammar but failed
    validation; ``clamped`` counts boxes nudged back inside the image.
    """

    answer_text: str = ""
    boxes: list[BBox] = field(default_factory=list)
    indices: list[int] = field(default_factory=list)
    kind: str = "boxes"
    dropped: int = 0
    clamped: int = 0

    @property
    def followed_instruction(self) -> bool:
        return bool(self.boxes) or bool(self.indices)


_STYLE_TAG = re.compile(r"<[^<>]*?style\s*=\s*\"([^\"]*)\"[^<>]*>", re.IGNORECASE)
_CLOSE_TAG = re.compile(r"</[a-zA-Z][a-zA-Z0-9-]*\s*>")
_CSS_DECL = re.compile(r"([a-zA-Z-]+)\s*:\s*(-?\d+(?:\.\d+)?)\s*px", re.IGNORECASE)
_INT_GROUP = re.compile(
    r"\[\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\]"
)
_NUM_GROUP = re.compile(
    r"\[\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*,"
    r"\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\]"
)
_BRACKET_SPAN = re.compile(r"[\[({]([^\[\](){}]*)[\])}]")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")
_DIGITS = re.compile(r"\d+")


def _strip_spans(text: str, spans: list[tuple[int, int]]) -> str:
    """Remove the given character spans and tidy leftover whitespace."""
    if not spans:
        return text.strip()
    out = []
    pos = 0
    for start, end in sorted(spans):
        out.append(text[pos:start])
        pos = max(pos, end)
    out.append(text[pos:])
    joined = "".join(out)
    joined = re.sub(r"[ \t]{2,}", " ", joined)
    return "\n".join(line.rstrip() for line in joined.splitlines()).strip()


def _clamp_box(
    x1: int, y1: int, x2: int, y2: int, image_size: tuple[int, int]
) -> tuple[BBox | None, bool]:
    """Clamp coordinates to the image; returns (box, was_clamped)."""
    image_w, image_h = image_size
    cx1 = min(max(x1, 0), image_w)
    cx2 = min(max(x2, 0), image_w)
    cy1 = min(max(y1, 0), image_h)
    cy2 = min(max(y2, 0), image_h)
    clamped = (cx1, cy1, cx2, cy2) != (x1, y1, x2, y2)
    if cx1 >= cx2 or cy1 >= cy2:
        return None, clamped
    return BBox(cx1, cy1, cx2, cy2), clamped


def parse_css(text: str, image_size: tuple[int, int]) -> ParsedResponse:
    """Extract boxes from style blocks with CSS pixel properties.

    Accepts left/top/width/height or left/top/right/bottom keys in any
    order; right/bottom are read as x2/y2. The surrounding tags are
    removed from the answer text.
    """
    result = ParsedResponse(kind="boxes")
    spans: list[tuple[int, int]] = []
    for m in _STYLE_TAG.finditer(text):
        spans.append(m.span())
        decls = {k.lower(): float(v) for k, v in _CSS_DECL.findall(m.group(1))}
        coords = _css_coords(decls)
        if coords is None:
            result.dropped += 1
            continue
        box, clamped = _clamp_box(*coords, image_size)
        if clamped:
            result.clamped += 1
        if box is None:
            result.dropped += 1
        else:
            result.boxes.append(box)
    for m in _CLOSE_TAG.finditer(text):
        spans.append(m.span())
    result.answer_text = _strip_spans(text, spans)
    return result


def _css_coords(decls: dict[str, float]) -> tuple[int, int, int, int] | None:
    if "left" not in decls or "top" not in decls:
        return None
    left, top = decls["left"], decls["top"]
    if "width" in decls and "height" in decls:
        right = left + decls["width"]
        bottom = top + decls["height"]
    elif "right" in decls and "bottom" in decls:
        right, bottom = decls["right"], decls["bottom"]
    else:
        return None
    return (
        round_half_away(left),
        round_half_away(top),
        round_half_away(right),
        round_half_away(bottom),
    )


def parse_abs_list(text: str, image_size: tuple[int, int]) -> ParsedResponse:
    """Extract bracketed ``[x1, y1, x2, y2]`` integer groups."""
    result = ParsedResponse(kind="boxes")
    spans = []
    for m in _INT_GROUP.finditer(text):
        spans.append(m.span())
        x1, y1, x2, y2 = (int(g) for g in m.groups())
        box, clamped = _clamp_box(x1, y1, x2, y2, image_size)
        if clamped:
            result.clamped += 1
        if box is None:
            result.dropped += 1
        else:
            result.boxes.append(box)
    result.answer_text = _strip_spans(text, spans)
    return result


def parse_rel_list(
    text: str, image_size: tuple[int, int], scale: float = 1.0
) -> ParsedResponse:
    """Extract bracketed 4-number groups of relative coordinates.

    Values outside [0, scale] are parse errors (the group is dropped and
    counted), not silently clamped.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    result = ParsedResponse(kind="boxes")
    spans = []
    for m in _NUM_GROUP.finditer(text):
        spans.append(m.span())
        rx1, ry1, rx2, ry2 = (float(g) for g in m.groups())
        try:
            rel = RelBox(rx1, ry1, rx2, ry2, scale=scale)
            result.boxes.append(rel_to_abs(rel, image_size))
        except ValueError:
            result.dropped += 1
    result.answer_text = _strip_spans(text, spans)
    return result


def parse_indices(text: str, max_index: int) -> ParsedResponse:
    """Extract selected indices from the first integer-bearing line.

    The prompt asks for comma-separated indices on the first line; models
    often prepend pleasantries, so the first line that contains an
    integer is used. Out-of-range values are discarded, duplicates are
    collapsed keeping first occurrence, and the remaining lines become
    the answer text (rationale).
    """
    if max_index < 0:
        raise ValueError("max_index must be >= 0")
    lines = text.splitlines()
    for lineno, line in enumerate(lines):
        tokens = _DIGITS.findall(line)
        if not tokens:
            continue
        seen: set[int] = set()
        indices: list[int] = []
        for tok in tokens:
            v = int(tok)
            if 0 <= v <= max_index and v not in seen:
                seen.add(v)
                indices.append(v)
        answer = "\n".join(lines[lineno + 1 :]).strip()
        return ParsedResponse(answer_text=answer, indices=indices, kind="indices")
    return ParsedResponse(answer_text=text.strip(), kind="indices")


def extract_fallback(text: str) -> list[tuple[float, float, float, float]]:
    """Format-agnostic scan for 4-number groups inside any bracket pair.

    Used only when the format-specific parser finds nothing and lenient
    extraction was explicitly enabled.
    """
    out = []
    for m in _BRACKET_SPAN.finditer(text):
        nums = _NUMBER.findall(m.group(1))
        if len(nums) == 4:
            a, b, c, d = (float(v) for v in nums)
            out.append((a, b, c, d))
    return out


def serialize_boxes(
    boxes: list[BBox],
    fmt: ResponseFormat,
    image_size: tuple[int, int],
    scale: float = 1.0,
) -> str:
    """Render boxes in the given format so the matching parser recovers them.

    Exact round-trip for CSS and absolute lists; the relative list is
    exact only when coordinates divide the image dimensions evenly,
    otherwise within one pixel per coordinate.
    """
    if fmt is ResponseFormat.INDEX_SELECTION:
        raise ValueError("indices have no box serialization")
    if not boxes:
        return ""
    image_w, image_h = image_size
    parts = []
    for b in boxes:
        if fmt is ResponseFormat.CSS_ABSOLUTE:
            parts.append(
                f'<box style="left: {b.x1}px; top: {b.y1}px; '
                f'width: {b.width}px; height: {b.height}px;"></box>'
            )
        elif fmt is ResponseFormat.LIST_ABSOLUTE:
            parts.append(f"[{b.x1}, {b.y1}, {b.x2}, {b.y2}]")
        else:
            rx1 = round(b.x1 * scale / image_w, 6)
            ry1 = round(b.y1 * scale / image_h, 6)
            rx2 = round(b.x2 * scale / image_w, 6)
            ry2 = round(b.y2 * scale / image_h, 6)
            parts.append(f"[{rx1}, {ry1}, {rx2}, {ry2}]")
    return " ".join(parts)


def parse_for_format(
    text: str,
    fmt: ResponseFormat,
    image_size: tuple[int, int],
    scale: float = 1.0,
    max_index: int | None = None,
) -> ParsedResponse:
    """Dispatch to the parser matching ``fmt``."""
    if fmt is ResponseFormat.CSS_ABSOLUTE:
        return parse_css(text, image_size)
    if fmt is ResponseFormat.LIST_ABSOLUTE:
        return parse_abs_list(text, image_size)
    if fmt is ResponseFormat.LIST_RELATIVE:
        return parse_rel_list(text, image_size, scale)
    if max_index is None:
        raise ValueError("index parsing requires max_index")
    return parse_indices(text, max_index)
