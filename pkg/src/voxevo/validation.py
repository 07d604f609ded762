"""Input validation helpers for the estimator-facing API."""
from __future__ import annotations

from pathlib import Path

from .morphology import VoxelGrid, parse_morphology


def as_grid(X) -> VoxelGrid:
    """Coerce a morphology argument to a VoxelGrid.

    Accepts a VoxelGrid, a morphology document string, or a filesystem path
    to one.
    """
    if isinstance(X, VoxelGrid):
        return X
    if isinstance(X, Path):
        return parse_morphology(X.read_text(), id=X.name)
    if isinstance(X, str):
        if "\n" in X:
            return parse_morphology(X)
        p = Path(X)
        if p.exists():
            return parse_morphology(p.read_text(), id=p.name)
        raise ValueError(f"morphology path {X!r} does not exist")
    raise TypeError(f"cannot interpret {type(X).__name__} as a morphology")


def as_grid_list(X) -> list[VoxelGrid]:
    """One grid or a sequence of grids, all sharing the same dimensions."""
    if isinstance(X, (VoxelGrid, str, Path)):
        grids = [as_grid(X)]
    else:
        grids = [as_grid(x) for x in X]
    if not grids:
        raise ValueError("at least one morphology is required")
    dims = grids[0].dims
    for g in grids[1:]:
        if g.dims != dims:
            raise ValueError(f"morphology dims differ: {g.dims} vs {dims}")
    return grids


def check_seed(random_state) -> int:
    if random_state is None:
        return 0
    if isinstance(random_state, (int,)) and not isinstance(random_state, bool):
        return int(random_state)
    raise TypeError("random_state must be an int or None")
