"""Voxel morphologies: the lattice shapes whose controllers get evolved.

A morphology is a dense 3D lattice of material codes (0 empty, 1 passive,
3 contractile).  Grids are immutable after validation so they can be shared
freely between concurrent evaluators.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EMPTY = 0
PASSIVE = 1
CONTRACTILE = 3

MATERIAL_CODES = (EMPTY, PASSIVE, CONTRACTILE)

DEFAULT_DIMS = (20, 8, 8)

# Neighbour offsets for 6-connectivity.
_FACE_NEIGHBOURS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


class MorphologyError(ValueError):
    """Base class for morphology parsing/validation failures."""


class DimensionMismatchError(MorphologyError):
    pass


class IllegalCharacterError(MorphologyError):
    pass


class DisconnectedMorphologyError(MorphologyError):
    pass


class NoAnchorError(MorphologyError):
    pass


class NoActiveVoxelError(MorphologyError):
    pass


@dataclass(frozen=True)
class VoxelGrid:
    """Immutable occupancy/material lattice.

    ``cells`` has shape ``(nx, ny, nz)``; ``cells[x, y, z]`` is the material
    code at that voxel.  Flattened orderings elsewhere in the package are
    x-fastest (x varies quickest, then y, then z).
    """

    cells: np.ndarray
    id: str = ""

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.ndim != 3:
            raise DimensionMismatchError(f"grid {self.id!r}: expected 3D cells, got shape {cells.shape}")
        cells = cells.copy()
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        validate_grid(self)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.cells.shape

    def flat(self) -> np.ndarray:
        """Material codes flattened x-fastest."""
        return self.cells.flatten(order="F")

    def occupied(self) -> np.ndarray:
        """Boolean mask of non-empty voxels, shape (nx, ny, nz)."""
        return self.cells != EMPTY

    def count(self, code: int) -> int:
        return int(np.count_nonzero(self.cells == code))

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.cells.shape == other.cells.shape and bool(np.all(self.cells == other.cells))

    def __hash__(self):
        return hash((self.cells.shape, self.cells.tobytes()))


def _first_offending_coordinate(cells: np.ndarray) -> tuple[int, int, int] | None:
    """First non-empty voxel, x-fastest scan, outside the component of the
    first non-empty voxel.  None when the occupied set is 6-connected."""
    nx, ny, nz = cells.shape
    occupied = cells != EMPTY
    n_occ = int(np.count_nonzero(occupied))
    if n_occ == 0:
        return None
    xs, ys, zs = np.nonzero(occupied)
    # x-fastest scan order == sort by (z, y, x)
    order = np.lexsort((xs, ys, zs))
    seed = (int(xs[order[0]]), int(ys[order[0]]), int(zs[order[0]]))
    seen = np.zeros_like(occupied, dtype=bool)
    seen[seed] = True
    stack = [seed]
    while stack:
        x, y, z = stack.pop()
        for dx, dy, dz in _FACE_NEIGHBOURS:
            p, q, r = x + dx, y + dy, z + dz
            if 0 <= p < nx and 0 <= q < ny and 0 <= r < nz and occupied[p, q, r] and not seen[p, q, r]:
                seen[p, q, r] = True
                stack.append((p, q, r))
    if int(np.count_nonzero(seen)) == n_occ:
        return None
    for i in order:
        coord = (int(xs[i]), int(ys[i]), int(zs[i]))
        if not seen[coord]:
            return coord
    return None


def validate_grid(grid: VoxelGrid, require_active: bool = False) -> None:
    """Raise a MorphologyError subclass on the first violated invariant.

    ``require_active`` additionally demands a contractile voxel; it is
    enforced for parsed/generated morphologies but not for directly built
    grids, so the simulator's zero-actuation null cases stay constructible.
    """
    cells = grid.cells
    bad = ~np.isin(cells, MATERIAL_CODES)
    if bad.any():
        xs, ys, zs = np.nonzero(bad)
        order = np.lexsort((xs, ys, zs))
        i = order[0]
        raise IllegalCharacterError(
            f"grid {grid.id!r}: illegal material code {int(cells[xs[i], ys[i], zs[i]])} "
            f"at ({int(xs[i])},{int(ys[i])},{int(zs[i])})"
        )
    if not (cells != EMPTY).any():
        raise NoAnchorError(f"grid {grid.id!r}: grid is entirely empty")
    if not (cells[0, :, :] != EMPTY).any():
        raise NoAnchorError(f"grid {grid.id!r}: no non-empty voxel on the x=0 anchor face")
    if require_active and not (cells == CONTRACTILE).any():
        raise NoActiveVoxelError(f"grid {grid.id!r}: no contractile voxel present")
    coord = _first_offending_coordinate(cells)
    if coord is not None:
        raise DisconnectedMorphologyError(
            f"grid {grid.id!r}: voxel at {coord} is disconnected from the anchor component"
        )


def parse_morphology(text: str, id: str = "") -> VoxelGrid:
    """Parse the layered text format into a validated VoxelGrid.

    Line 1 is ``dims nx ny nz``.  Then nz blocks separated by blank lines;
    block z holds ny lines of nx characters from {0,1,3}.  Character column
    is the x index, line within the block is the y index.  Lines starting
    with ``#`` are ignored.
    """
    lines = [ln.rstrip("\n") for ln in text.splitlines()]
    lines = [ln for ln in lines if not ln.lstrip().startswith("#")]
    # leading blank lines carry no information
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise DimensionMismatchError("empty morphology document")
    header = lines.pop(0).split()
    if len(header) != 4 or header[0] != "dims":
        raise DimensionMismatchError(f"first line must be 'dims nx ny nz', got {' '.join(header)!r}")
    try:
        nx, ny, nz = (int(v) for v in header[1:])
    except ValueError:
        raise DimensionMismatchError(f"non-integer dimensions in {' '.join(header)!r}") from None
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise DimensionMismatchError(f"dimensions must be positive, got ({nx},{ny},{nz})")

    blocks: list[list[str]] = []
    current: list[str] = []
    for ln in lines:
        if ln.strip():
            current.append(ln)
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    if len(blocks) != nz:
        raise DimensionMismatchError(f"expected {nz} layer blocks, found {len(blocks)}")

    cells = np.empty((nx, ny, nz), dtype=np.uint8)
    for z, block in enumerate(blocks):
        if len(block) != ny:
            raise DimensionMismatchError(f"block z={z}: expected {ny} lines, found {len(block)}")
        for y, row in enumerate(block):
            if len(row) != nx:
                raise DimensionMismatchError(f"block z={z}, line y={y}: expected {nx} characters, found {len(row)}")
            for x, ch in enumerate(row):
                if ch == "0":
                    cells[x, y, z] = EMPTY
                elif ch == "1":
                    cells[x, y, z] = PASSIVE
                elif ch == "3":
                    cells[x, y, z] = CONTRACTILE
                else:
                    raise IllegalCharacterError(f"illegal character {ch!r} at ({x},{y},{z})")
    grid = VoxelGrid(cells=cells, id=id)
    validate_grid(grid, require_active=True)
    return grid


def render_morphology(grid: VoxelGrid) -> str:
    """Inverse of parse_morphology: parse(render(g)) == g."""
    nx, ny, nz = grid.dims
    out = [f"dims {nx} {ny} {nz}"]
    for z in range(nz):
        out.append("")
        for y in range(ny):
            out.append("".join(str(int(grid.cells[x, y, z])) for x in range(nx)))
    return "\n".join(out) + "\n"


def _interior_pattern(index: int, shape: tuple[int, int, int], rng: np.random.Generator) -> np.ndarray:
    """Boolean contractile mask for the interior block of a benchmark."""
    nx, ny, nz = shape
    x = np.arange(nx)[:, None, None]
    y = np.arange(ny)[None, :, None]
    z = np.arange(nz)[None, None, :]
    if index == 1:  # solid active core
        mask = np.ones(shape, dtype=bool)
    elif index == 2:  # bottom slab
        mask = np.broadcast_to(z < nz / 2, shape).copy()
    elif index == 3:  # top slab
        mask = np.broadcast_to(z >= nz / 2, shape).copy()
    elif index == 4:  # axial stripes
        mask = np.broadcast_to((x // 2) % 2 == 0, shape).copy()
    elif index == 5:  # checkerboard
        mask = (x + y + z) % 2 == 0
    elif index == 6:  # random scatter
        mask = rng.random(shape) < 0.5
    elif index == 7:  # twin side rails
        mask = np.broadcast_to((y < ny / 3) | (y >= ny - ny / 3), shape).copy()
    elif index == 8:  # hollow tube
        ring = (y == 0) | (y == ny - 1) | (z == 0) | (z == nz - 1)
        mask = np.broadcast_to(ring, shape).copy()
    else:  # index == 9: density ramp along the beam
        prob = x / max(nx - 1, 1)
        mask = rng.random(shape) < np.broadcast_to(prob, shape)
    # light seeded speckle so every index responds to the seed
    flip = rng.random(shape) < 0.03
    return mask ^ flip


def generate_benchmark(index: int, seed: int, dims: tuple[int, int, int] = DEFAULT_DIMS) -> VoxelGrid:
    """Deterministic benchmark morphology: passive one-voxel enclosure on the
    four lateral faces around a per-index interior mix of contractile and
    passive voxels."""
    if not 1 <= index <= 9:
        raise ValueError(f"benchmark index must be in 1..9, got {index}")
    nx, ny, nz = dims
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, index])
    cells = np.full(dims, PASSIVE, dtype=np.uint8)
    interior = _interior_pattern(index, (nx, ny - 2, nz - 2), rng)
    block = np.where(interior, CONTRACTILE, PASSIVE).astype(np.uint8)
    cells[:, 1 : ny - 1, 1 : nz - 1] = block
    if not (cells == CONTRACTILE).any():  # unreachable for these motifs; keeps the invariant anyway
        cells[nx // 2, ny // 2, nz // 2] = CONTRACTILE
    grid = VoxelGrid(cells=cells, id=f"bha-{index}")
    validate_grid(grid, require_active=True)
    return grid


def material_inputs(grid: VoxelGrid, x: int, y: int, z: int) -> tuple[float, float, float, float]:
    """Normalized coordinates plus material code for one voxel.

    Each axis maps 0 -> -1 and dim-1 -> +1; a single-cell axis maps to 0.
    The material is passed through as its raw code value.
    """
    nx, ny, nz = grid.dims
    if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
        raise IndexError(f"voxel index ({x},{y},{z}) outside dims {grid.dims}")

    def norm(i: int, n: int) -> float:
        return 0.0 if n == 1 else 2.0 * i / (n - 1) - 1.0

    return norm(x, nx), norm(y, ny), norm(z, nz), float(grid.cells[x, y, z])


def coordinate_inputs(grid: VoxelGrid) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized material_inputs for every non-empty voxel.

    Returns (coords, inputs): integer voxel coordinates of shape (N, 3) in
    x-fastest order and the matching (N, 4) network input rows.
    """
    nx, ny, nz = grid.dims
    occ = grid.occupied()
    xs, ys, zs = np.nonzero(occ)
    order = np.lexsort((xs, ys, zs))
    xs, ys, zs = xs[order], ys[order], zs[order]
    coords = np.stack([xs, ys, zs], axis=1).astype(np.int64)

    def norm(idx: np.ndarray, n: int) -> np.ndarray:
        if n == 1:
            return np.zeros(len(idx), dtype=np.float64)
        return 2.0 * idx / (n - 1) - 1.0

    inputs = np.stack(
        [norm(xs, nx), norm(ys, ny), norm(zs, nz), grid.cells[xs, ys, zs].astype(np.float64)],
        axis=1,
    )
    return coords, inputs
