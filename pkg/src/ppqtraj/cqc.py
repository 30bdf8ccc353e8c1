"""Coordinate quadtree coding (CQC) of the deviation inside the eps1 disc.

The disc around a true point is covered by an N x N grid of g_s cells with the
true point at the centre of the middle cell. A fixed quadtree template over that
grid gives every cell a short code (two bits per level, root first); storing the
code of the cell that holds the reconstructed point lets a reader move the
reconstruction back to within half a cell diagonal of the truth.

Geometry, in integer "half-cell" units so that decoding is exact:

* a node owns a square block of side ``s`` (1, or an even number) and the
  rectangle of real grid cells inside it;
* its children are the four quadrants around the block centre, labelled
  00 upper-left, 01 upper-right, 10 lower-left, 11 lower-right;
* a child's subspace coordinate SC is the signed extent (in cells) of its real
  cells measured from the parent centre; its block is the square of side
  ``|SC'|`` (the padded SC) anchored at the parent centre and growing outward,
  so padding always lies away from the parent centre;
* the root block is the smallest even square holding the grid (or 1 x 1), with
  real cells flush against its lower-left corner.

A cell's centre is therefore ``sum(SC'_j) / 2`` along its path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# quadrant label -> (sign x, sign y)
QUADRANT_SIGNS = ((-1, 1), (1, 1), (-1, -1), (1, -1))
LABELS = ("00", "01", "10", "11")


@dataclass(frozen=True)
class CqcCode:
    bits: int
    levels: int

    def __post_init__(self):
        if self.levels < 0 or not 0 <= self.bits < (1 << (2 * self.levels)):
            raise ValueError(f"invalid code bits={self.bits} levels={self.levels}")

    @classmethod
    def from_string(cls, s: str) -> "CqcCode":
        if len(s) % 2 or any(ch not in "01" for ch in s):
            raise ValueError(f"not a CQC bit string: {s!r}")
        return cls(int(s, 2) if s else 0, len(s) // 2)

    def __str__(self):
        return format(self.bits, f"0{2 * self.levels}b") if self.levels else ""

    def labels(self) -> list[int]:
        return [(self.bits >> (2 * (self.levels - 1 - i))) & 3 for i in range(self.levels)]

    def to_bytes(self) -> bytes:
        """One-byte level count, then the bits MSB first, zero padded to a byte."""
        nbytes = (2 * self.levels + 7) // 8
        pad = 8 * nbytes - 2 * self.levels
        return bytes([self.levels]) + (self.bits << pad).to_bytes(nbytes, "big")

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> tuple["CqcCode", int]:
        levels = buf[offset]
        nbytes = (2 * levels + 7) // 8
        raw = int.from_bytes(buf[offset + 1: offset + 1 + nbytes], "big")
        return cls(raw >> (8 * nbytes - 2 * levels), levels), offset + 1 + nbytes


def pad_sc(sc) -> tuple[int, int]:
    """Padded subspace coordinate: unit cells stay, otherwise the enclosing even square."""
    x, y = int(sc[0]), int(sc[1])
    if x == 0 or y == 0:
        raise ValueError(f"subspace coordinate components must be non-zero: {sc}")
    if abs(x) == 1 and abs(y) == 1:
        return x, y
    side = 2 * math.ceil(max(abs(x), abs(y)) / 2)
    return side * (1 if x > 0 else -1), side * (1 if y > 0 else -1)


@dataclass
class CqNode:
    sc: tuple[int, int]  # subspace coordinate (root: (0, 0))
    center2: tuple[int, int]  # block centre, half-cell units, root frame
    side: int  # block side in cells
    real: tuple[int, int, int, int]  # real cells [x0, x1) x [y0, y1), cell units, root frame
    children: list[Optional["CqNode"]] = field(default_factory=lambda: [None] * 4)
    depth: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.side == 1

    @property
    def padded(self) -> bool:
        x0, x1, y0, y1 = self.real
        return (x1 - x0) * (y1 - y0) < self.side * self.side


def partition_padding(node: CqNode) -> list[Optional[CqNode]]:
    """Split a node into its four quadrant children (``None`` for all-padding slots)."""
    if node.side < 2 or node.side % 2:
        raise ValueError("only even blocks can be split")
    cx, cy = node.center2[0] // 2, node.center2[1] // 2
    h = node.side // 2
    x0, x1, y0, y1 = node.real
    out: list[Optional[CqNode]] = []
    for sx, sy in QUADRANT_SIGNS:
        qx0, qx1 = (cx - h, cx) if sx < 0 else (cx, cx + h)
        qy0, qy1 = (cy - h, cy) if sy < 0 else (cy, cy + h)
        rx0, rx1 = max(x0, qx0), min(x1, qx1)
        ry0, ry1 = max(y0, qy0), min(y1, qy1)
        if rx0 >= rx1 or ry0 >= ry1:
            out.append(None)
            continue
        ext_x = cx - rx0 if sx < 0 else rx1 - cx
        ext_y = cy - ry0 if sy < 0 else ry1 - cy
        sc = (sx * ext_x, sy * ext_y)
        scp = pad_sc(sc)
        out.append(CqNode(sc, (node.center2[0] + scp[0], node.center2[1] + scp[1]),
                          abs(scp[0]), (rx0, rx1, ry0, ry1), depth=node.depth + 1))
    return out


def root_side(width: int, height: int) -> int:
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be >= 1")
    if width == 1 and height == 1:
        return 1
    return 2 * math.ceil(max(width, height) / 2)


class CoordinateQuadtree:
    """Fixed coding template for a ``width x height`` grid of cells."""

    def __init__(self, width: int, height: int | None = None):
        height = width if height is None else height
        self.width, self.height = width, height
        self.side = root_side(width, height)
        lo = -(self.side // 2)
        # cell (col, row) has root-frame lower-left corner (left + col, left + row)
        self.left2 = -self.side  # lower-left edge in half units (also right for side 1)
        real = (lo, lo + width, lo, lo + height) if self.side > 1 else (0, 1, 0, 1)
        self.root = CqNode((0, 0), (0, 0), self.side, real)
        self.depth = 0
        self._codes = np.zeros((width, height), dtype=np.int64)
        self._levels = np.zeros((width, height), dtype=np.int64)
        self._by_code: dict[tuple[int, int], tuple[int, int]] = {}
        self._build(self.root, 0, 0)

    def _build(self, node: CqNode, bits: int, levels: int):
        self.depth = max(self.depth, levels)
        if node.is_leaf:
            col, row = self.cell_of_center2(node.center2)
            self._codes[col, row] = bits
            self._levels[col, row] = levels
            self._by_code[(bits, levels)] = (col, row)
            return
        node.children = partition_padding(node)
        for label, child in enumerate(node.children):
            if child is not None:
                self._build(child, (bits << 2) | label, levels + 1)

    def cell_of_center2(self, c2) -> tuple[int, int]:
        if self.side == 1:
            return 0, 0
        return (c2[0] - 1 - self.left2) // 2, (c2[1] - 1 - self.left2) // 2

    def center2_of_cell(self, col: int, row: int) -> tuple[int, int]:
        """Exact centre of a real cell, in half-cell units of the root frame."""
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise ValueError(f"cell ({col}, {row}) outside {self.width}x{self.height} grid")
        if self.side == 1:
            return 0, 0
        return self.left2 + 2 * col + 1, self.left2 + 2 * row + 1

    def encode(self, col: int, row: int) -> CqcCode:
        self.center2_of_cell(col, row)
        return CqcCode(int(self._codes[col, row]), int(self._levels[col, row]))

    def decode2(self, code: CqcCode) -> tuple[int, int]:
        """Sum of padded SCs along the path, i.e. twice the cell centre."""
        node = self.root
        sx = sy = 0
        for label in code.labels():
            if node.is_leaf:
                raise ValueError(f"code {code} is longer than its path in the tree")
            child = node.children[label]
            if child is None:
                raise ValueError(f"code {code} addresses a padding subspace")
            px, py = pad_sc(child.sc)
            sx += px
            sy += py
            node = child
        if not node.is_leaf:
            raise ValueError(f"code {code} stops at an internal node")
        return sx, sy

    def decode(self, code: CqcCode) -> tuple[float, float]:
        sx, sy = self.decode2(code)
        return sx / 2, sy / 2

    def code_arrays(self):
        """(bits, levels) lookup tables indexed [col, row]."""
        return self._codes, self._levels

    def cell_of_code(self, code: CqcCode) -> tuple[int, int]:
        try:
            return self._by_code[(code.bits, code.levels)]
        except KeyError:
            raise ValueError(f"code {code} does not address a real cell") from None

    def walk(self):
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(c for c in reversed(n.children) if c is not None)


@dataclass(frozen=True)
class GridSpec:
    """Cell grid covering the eps1 disc; an odd width keeps the truth at a cell centre."""

    eps1: float
    g_s: float
    width: int

    @classmethod
    def from_params(cls, eps1: float, g_s: float) -> "GridSpec":
        if not (eps1 > 0 and g_s > 0):
            raise ValueError("eps1 and g_s must be positive")
        n = max(1, math.ceil(2 * eps1 / g_s))
        if n % 2 == 0:
            n += 1
        return cls(eps1, g_s, n)

    @property
    def height(self) -> int:
        return self.width


def build_coordinate_quadtree(eps1: float, g_s: float) -> CoordinateQuadtree:
    spec = GridSpec.from_params(eps1, g_s)
    return CoordinateQuadtree(spec.width, spec.height)


class DeviationCoder:
    """Encodes reconstructions relative to their true point and refines them back.

    ``eps1`` and ``g_s`` are in coordinate units.
    """

    def __init__(self, eps1: float, g_s: float):
        self.spec = GridSpec.from_params(eps1, g_s)
        self.g_s = g_s
        self.eps1 = eps1
        self.tree = CoordinateQuadtree(self.spec.width)
        n = self.spec.width
        self.center_cell = (n // 2, n // 2)
        self.cqc1 = self.tree.encode(*self.center_cell)
        self.c1_2 = self.tree.center2_of_cell(*self.center_cell)
        self._bits, self._levels = self.tree.code_arrays()

    def cells_of(self, actual, recon) -> np.ndarray:
        """Grid cell (col, row) holding each reconstruction, true point at the centre cell."""
        A = np.asarray(actual, dtype=np.float64).reshape(-1, 2)
        R = np.asarray(recon, dtype=np.float64).reshape(-1, 2)
        n = self.spec.width
        gap = R - A
        # the centre cell spans [-g_s/2, g_s/2) around the truth
        u = gap / self.g_s + n / 2
        cells = np.floor(u).astype(np.int64)
        # a gap of exactly eps1 can land on the outer edge of the grid
        edge = (cells == n) & (np.abs(gap) <= self.eps1 * (1 + 1e-9))
        cells[edge] = n - 1
        edge = (cells == -1) & (np.abs(gap) <= self.eps1 * (1 + 1e-9))
        cells[edge] = 0
        bad = ((cells < 0) | (cells >= n)).any(axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(f"deviation {gap[i]} exceeds the CQC grid extent "
                             f"(eps1={self.eps1}); the error bound was violated upstream")
        return cells

    def encode_many(self, actual, recon) -> tuple[np.ndarray, np.ndarray]:
        cells = self.cells_of(actual, recon)
        return self._bits[cells[:, 0], cells[:, 1]], self._levels[cells[:, 0], cells[:, 1]]

    def offset2_many(self, bits, levels) -> np.ndarray:
        """c_cqc1 - c_cqc2 in half-cell units for each stored code."""
        out = np.empty((len(bits), 2), dtype=np.int64)
        for i, (b, l) in enumerate(zip(bits, levels)):
            cx, cy = self.tree.decode2(CqcCode(int(b), int(l)))
            out[i] = (self.c1_2[0] - cx, self.c1_2[1] - cy)
        return out

    def refine_many(self, recon, bits, levels) -> np.ndarray:
        R = np.asarray(recon, dtype=np.float64).reshape(-1, 2)
        return apply_offset(R, self.offset2_many(bits, levels), self.g_s)

    def refine_point(self, recon, code: CqcCode) -> tuple[float, float]:
        cx, cy = self.tree.decode2(code)
        return refine_scalar(recon, (self.c1_2[0] - cx, self.c1_2[1] - cy), self.g_s)


def apply_offset(R: np.ndarray, d2: np.ndarray, g_s: float) -> np.ndarray:
    """recon + g_s * (c1 - c2) with the offset given in half-cell units."""
    return R + g_s * (d2 * 0.5)


def refine_scalar(recon, d2, g_s: float) -> tuple[float, float]:
    return (float(recon[0]) + g_s * (d2[0] * 0.5), float(recon[1]) + g_s * (d2[1] * 0.5))


def refine_reconstruction(xy_hat, cqc1: CqcCode, cqc2: CqcCode, g_s: float,
                          tree: CoordinateQuadtree) -> tuple[float, float]:
    """Refined point (x', y') = (x^, y^) + g_s * (c_cqc1 - c_cqc2)."""
    a = tree.decode2(cqc1)
    b = tree.decode2(cqc2)
    return refine_scalar(xy_hat, (a[0] - b[0], a[1] - b[1]), g_s)


def encode_deviation(actual, reconstructed, coder: DeviationCoder) -> CqcCode:
    bits, levels = coder.encode_many(actual, reconstructed)
    return CqcCode(int(bits[0]), int(levels[0]))
