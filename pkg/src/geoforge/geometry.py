"""Oriented bounding box math.

Boxes are stored as center/size/angle in pixel coordinates. ``theta`` is in
degrees and rotates the box's local x-axis toward +y, so on a y-down image a
positive angle reads as clockwise. Angles are folded into ``[0, 90)`` by
swapping width and height, which describes the same rectangle.

Tolerances: containment accepts corners up to ``1e-9 * max(w, h)`` outside an
edge; intersections with area below ``1e-12`` of the smaller box count as
empty.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

from geoforge.codec import SpatialToken

Point = tuple[float, float]

# Smallest pixel extent produced by ``denormalize`` for zero-width tokens.
MIN_EXTENT = 1e-6


class HasSize(Protocol):
    width: int
    height: int


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.cx, self.cy, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box parameters: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extents must be positive, got w={self.w}, h={self.h}")
        theta = float(self.theta) % 180.0
        w, h = float(self.w), float(self.h)
        if theta >= 90.0:
            theta -= 90.0
            w, h = h, w
        # -0.0 % 180 and tiny negatives can land exactly on the upper bound
        if theta >= 90.0:
            theta = 0.0
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "theta", theta)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> Point:
        return (self.cx, self.cy)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.theta)


class GridPosition(enum.Enum):
    TOP_LEFT = "top left"
    TOP = "top"
    TOP_RIGHT = "top right"
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"
    BOTTOM_LEFT = "bottom left"
    BOTTOM = "bottom"
    BOTTOM_RIGHT = "bottom right"

    @property
    def text(self) -> str:
        return self.value


_GRID = (
    (GridPosition.TOP_LEFT, GridPosition.TOP, GridPosition.TOP_RIGHT),
    (GridPosition.LEFT, GridPosition.CENTER, GridPosition.RIGHT),
    (GridPosition.BOTTOM_LEFT, GridPosition.BOTTOM, GridPosition.BOTTOM_RIGHT),
)


def corners(box: OrientedBox) -> tuple[Point, Point, Point, Point]:
    """Rectangle vertices with positive signed (shoelace) area."""
    c = math.cos(math.radians(box.theta))
    s = math.sin(math.radians(box.theta))
    hw, hh = box.w / 2.0, box.h / 2.0
    out = []
    for dx, dy in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
        out.append((box.cx + dx * c - dy * s, box.cy + dx * s + dy * c))
    return tuple(out)  # type: ignore[return-value]


def signed_area(poly: Sequence[Point]) -> float:
    n = len(poly)
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return acc / 2.0


def polygon_area(poly: Sequence[Point]) -> float:
    return abs(signed_area(poly))


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point:
    # intersection of segment pq with the infinite line through a, b
    dp = _cross(a, b, p)
    dq = _cross(a, b, q)
    t = dp / (dp - dq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def clip_convex(subject: Sequence[Point], clip: Sequence[Point]) -> list[Point]:
    """Sutherland-Hodgman clipping of ``subject`` by the convex polygon ``clip``.

    Both polygons must have positive orientation.
    """
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        a, b = clip[i], clip[(i + 1) % n]
        inputs, output = output, []
        prev = inputs[-1]
        prev_in = _cross(a, b, prev) >= 0.0
        for cur in inputs:
            cur_in = _cross(a, b, cur) >= 0.0
            if cur_in:
                if not prev_in:
                    output.append(_line_intersection(prev, cur, a, b))
                output.append(cur)
            elif prev_in:
                output.append(_line_intersection(prev, cur, a, b))
            prev, prev_in = cur, cur_in
    return output


def _bounds(poly: Sequence[Point]) -> tuple[float, float, float, float]:
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    return min(xs), min(ys), max(xs), max(ys)


def intersection_area(a: OrientedBox, b: OrientedBox) -> float:
    pa, pb = corners(a), corners(b)
    ax0, ay0, ax1, ay1 = _bounds(pa)
    bx0, by0, bx1, by1 = _bounds(pb)
    if ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0:
        return 0.0
    poly = clip_convex(pa, pb)
    if len(poly) < 3:
        return 0.0
    inter = polygon_area(poly)
    if inter <= 1e-12 * min(a.area, b.area):
        return 0.0
    return min(inter, a.area, b.area)


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection over union of two oriented boxes by exact polygon clipping."""
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return max(0.0, min(1.0, inter / union))


def point_in_box(point: Point, box: OrientedBox, tol: float = 0.0) -> bool:
    """Closed point-in-rectangle test; ``tol`` is a distance slack in pixels."""
    poly = corners(box)
    for i in range(4):
        a, b = poly[i], poly[(i + 1) % 4]
        edge = math.hypot(b[0] - a[0], b[1] - a[1])
        if _cross(a, b, point) < -tol * edge:
            return False
    return True


def contains(outer: OrientedBox, inner: OrientedBox) -> bool:
    """True iff every corner of ``inner`` lies inside or on ``outer``."""
    tol = 1e-9 * max(outer.w, outer.h, 1.0)
    return all(point_in_box(p, outer, tol) for p in corners(inner))


def center_distance(a: OrientedBox, b: OrientedBox) -> float:
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


def grid_position(point: Point, image: HasSize) -> GridPosition:
    x, y = point
    if not (0 <= x < image.width and 0 <= y < image.height):
        raise ValueError(f"point {point} outside {image.width}x{image.height} image")
    col = min(int(math.floor(3 * x / image.width)), 2)
    row = min(int(math.floor(3 * y / image.height)), 2)
    return _GRID[row][col]


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _clamp(v: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, v))


def normalize(box: OrientedBox, image: HasSize) -> SpatialToken:
    """Quantize a pixel box to integer token coordinates on the [0, 100] scale.

    The corner pair is the pre-rotation axis-aligned rectangle; ``theta``
    rotates it about its center.
    """
    theta = round_half_away(box.theta)
    w, h = box.w, box.h
    if theta >= 90:
        theta -= 90
        w, h = h, w
    W, H = image.width, image.height
    xl = _clamp(round_half_away(100.0 * (box.cx - w / 2.0) / W), 0, 100)
    xr = _clamp(round_half_away(100.0 * (box.cx + w / 2.0) / W), 0, 100)
    yt = _clamp(round_half_away(100.0 * (box.cy - h / 2.0) / H), 0, 100)
    yb = _clamp(round_half_away(100.0 * (box.cy + h / 2.0) / H), 0, 100)
    return SpatialToken(xl, yt, xr, yb, theta)


def denormalize(token: SpatialToken, image: HasSize) -> OrientedBox:
    """Inverse of :func:`normalize` up to quantization.

    Zero-extent tokens map to boxes ``MIN_EXTENT`` pixels wide so the result
    is still a valid box; identical tokens always give identical boxes.
    """
    W, H = image.width, image.height
    x0, x1 = token.x_left * W / 100.0, token.x_right * W / 100.0
    y0, y1 = token.y_top * H / 100.0, token.y_bottom * H / 100.0
    return OrientedBox(
        cx=(x0 + x1) / 2.0,
        cy=(y0 + y1) / 2.0,
        w=max(x1 - x0, MIN_EXTENT),
        h=max(y1 - y0, MIN_EXTENT),
        theta=float(token.theta),
    )


def clamp_to_image(box: OrientedBox, image: HasSize) -> OrientedBox:
    """Shrink the pre-rotation rectangle so it lies within the image frame.

    Raises ValueError when nothing of the rectangle is left.
    """
    x0 = max(box.cx - box.w / 2.0, 0.0)
    x1 = min(box.cx + box.w / 2.0, float(image.width))
    y0 = max(box.cy - box.h / 2.0, 0.0)
    y1 = min(box.cy + box.h / 2.0, float(image.height))
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box.as_tuple()} lies outside the {image.width}x{image.height} image")
    if (x0, x1, y0, y1) == (box.cx - box.w / 2.0, box.cx + box.w / 2.0,
                            box.cy - box.h / 2.0, box.cy + box.h / 2.0):
        return box
    return OrientedBox((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0, box.theta)


def convex_hull(points: Sequence[Point]) -> list[Point]:
    """Andrew's monotone chain; returns hull with positive orientation."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def min_area_rect(points: Sequence[Point]) -> OrientedBox:
    """Minimum-area enclosing rectangle by rotating calipers over hull edges."""
    hull = convex_hull(points)
    if len(hull) < 3:
        raise ValueError("polygon is degenerate (fewer than three distinct non-collinear points)")
    best = None
    for i in range(len(hull)):
        p, q = hull[i], hull[(i + 1) % len(hull)]
        ang = math.atan2(q[1] - p[1], q[0] - p[0])
        c, s = math.cos(ang), math.sin(ang)
        # coordinates in the frame aligned with this edge
        us = [x * c + y * s for x, y in hull]
        vs = [-x * s + y * c for x, y in hull]
        u0, u1, v0, v1 = min(us), max(us), min(vs), max(vs)
        area = (u1 - u0) * (v1 - v0)
        if best is None or area < best[0] * (1 - 1e-12):
            uc, vc = (u0 + u1) / 2.0, (v0 + v1) / 2.0
            best = (area, uc * c - vc * s, uc * s + vc * c, u1 - u0, v1 - v0, math.degrees(ang))
    _, cx, cy, w, h, theta = best
    if w <= 0 or h <= 0:
        raise ValueError("polygon is degenerate (zero area)")
    return OrientedBox(cx, cy, w, h, theta)
