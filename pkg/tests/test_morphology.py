import numpy as np
import pytest

from voxevo.morphology import (
    CONTRACTILE,
    EMPTY,
    PASSIVE,
    DimensionMismatchError,
    DisconnectedMorphologyError,
    IllegalCharacterError,
    NoActiveVoxelError,
    NoAnchorError,
    VoxelGrid,
    coordinate_inputs,
    generate_benchmark,
    material_inputs,
    parse_morphology,
    render_morphology,
)


def doc_from_cells(cells):
    nx, ny, nz = cells.shape
    lines = [f"dims {nx} {ny} {nz}"]
    for z in range(nz):
        lines.append("")
        for y in range(ny):
            lines.append("".join(str(int(cells[x, y, z])) for x in range(nx)))
    return "\n".join(lines) + "\n"


def test_parse_minimal_single_voxel():
    grid = parse_morphology("dims 1 1 1\n3\n")
    assert grid.dims == (1, 1, 1)
    assert grid.cells[0, 0, 0] == CONTRACTILE


def test_parse_core_block_contractile_count():
    # all passive except an 18x4x4 contractile core; expected count by
    # direct enumeration of the core block
    cells = np.full((20, 8, 8), PASSIVE, dtype=np.uint8)
    expected = 0
    for x in range(20):
        for y in range(8):
            for z in range(8):
                if 1 <= x <= 18 and 2 <= y <= 5 and 2 <= z <= 5:
                    cells[x, y, z] = CONTRACTILE
                    expected += 1
    assert expected == 288
    grid = parse_morphology(doc_from_cells(cells))
    assert grid.count(CONTRACTILE) == expected


def test_parse_comments_ignored():
    grid = parse_morphology("# a comment\ndims 1 1 1\n# another\n3\n")
    assert grid.cells[0, 0, 0] == CONTRACTILE


def test_parse_disconnected_reports_coordinate():
    # two voxels that do not touch
    text = "dims 3 1 2\n301\n\n000\n"
    with pytest.raises(DisconnectedMorphologyError) as err:
        parse_morphology(text)
    assert "(2, 0, 0)" in str(err.value)


def test_parse_illegal_character_names_coordinate():
    with pytest.raises(IllegalCharacterError) as err:
        parse_morphology("dims 2 1 1\n3x\n")
    assert "(1,0,0)" in str(err.value)


def test_parse_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        parse_morphology("dims 2 1 1\n3\n")
    with pytest.raises(DimensionMismatchError):
        parse_morphology("dims 2 1 2\n31\n")
    with pytest.raises(DimensionMismatchError):
        parse_morphology("31\n")


def test_parse_no_anchor():
    with pytest.raises(NoAnchorError):
        parse_morphology("dims 2 1 1\n03\n")


def test_parse_no_active_voxel():
    with pytest.raises(NoActiveVoxelError):
        parse_morphology("dims 2 1 1\n11\n")


def test_direct_construction_allows_passive_only():
    # simulator null tests need all-passive grids; parse-level validation
    # still rejects them (above)
    grid = VoxelGrid(np.full((2, 2, 2), PASSIVE, dtype=np.uint8))
    assert grid.count(CONTRACTILE) == 0


def test_roundtrip_parse_render():
    rng = np.random.default_rng(7)
    for _ in range(20):
        dims = tuple(int(d) for d in rng.integers(1, 6, size=3))
        cells = rng.choice([EMPTY, PASSIVE, CONTRACTILE], size=dims).astype(np.uint8)
        cells[0, 0, 0] = CONTRACTILE  # anchor + active
        try:
            grid = VoxelGrid(cells)
        except DisconnectedMorphologyError:
            continue
        again = parse_morphology(render_morphology(grid))
        assert again == grid
    for k in range(1, 10):
        grid = generate_benchmark(k, 42)
        assert parse_morphology(render_morphology(grid)) == grid


def test_benchmark_determinism_and_index_sensitivity():
    a = generate_benchmark(1, 42)
    b = generate_benchmark(1, 42)
    assert a == b
    c = generate_benchmark(2, 42)
    assert np.count_nonzero(a.cells != c.cells) >= 1
    d = generate_benchmark(1, 43)
    assert np.count_nonzero(a.cells != d.cells) >= 1


def test_benchmarks_all_valid():
    for k in range(1, 10):
        for seed in (42, 1234):
            grid = generate_benchmark(k, seed)
            assert grid.dims == (20, 8, 8)
            # re-validates through the parser path
            parse_morphology(render_morphology(grid))
            assert grid.count(CONTRACTILE) >= 1
            assert (grid.cells[0, :, :] != EMPTY).any()
            # lateral enclosure is passive
            assert np.all(grid.cells[:, 0, :] == PASSIVE)
            assert np.all(grid.cells[:, -1, :] == PASSIVE)
            assert np.all(grid.cells[:, :, 0] == PASSIVE)
            assert np.all(grid.cells[:, :, -1] == PASSIVE)


def test_benchmark_index_out_of_range():
    with pytest.raises(ValueError):
        generate_benchmark(0, 42)
    with pytest.raises(ValueError):
        generate_benchmark(10, 42)


def test_material_inputs_corners():
    grid = generate_benchmark(1, 42)
    xn, yn, zn, m = material_inputs(grid, 0, 0, 0)
    assert (xn, yn, zn) == (-1.0, -1.0, -1.0)
    assert m == 1.0  # enclosure corner is passive
    xn, yn, zn, m = material_inputs(grid, 19, 7, 7)
    assert (xn, yn, zn) == (1.0, 1.0, 1.0)
    assert m == 1.0


def test_material_inputs_interior_value():
    grid = generate_benchmark(1, 42)
    xn, _, _, _ = material_inputs(grid, 9, 3, 3)
    assert xn == pytest.approx(2 * 9 / 19 - 1, abs=1e-15)
    assert material_inputs(grid, 9, 3, 3)[3] in (1.0, 3.0)


def test_material_inputs_single_cell_axis_and_bounds():
    grid = parse_morphology("dims 1 1 1\n3\n")
    assert material_inputs(grid, 0, 0, 0) == (0.0, 0.0, 0.0, 3.0)
    with pytest.raises(IndexError):
        material_inputs(grid, 1, 0, 0)


def test_coordinate_inputs_matches_scalar_path():
    grid = generate_benchmark(6, 42)
    coords, inputs = coordinate_inputs(grid)
    assert coords.shape[0] == int(np.count_nonzero(grid.occupied()))
    for row in range(0, coords.shape[0], 77):
        x, y, z = coords[row]
        assert tuple(inputs[row]) == material_inputs(grid, int(x), int(y), int(z))
    # x-fastest ordering
    flat_rank = coords[:, 0] + 20 * (coords[:, 1] + 8 * coords[:, 2])
    assert np.all(np.diff(flat_rank) > 0)


def test_grid_cells_immutable():
    grid = generate_benchmark(1, 42)
    with pytest.raises(ValueError):
        grid.cells[0, 0, 0] = EMPTY
