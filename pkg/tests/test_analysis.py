import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degensde import (
    GridError,
    GridField,
    Mollifier,
    check_pointwise_maximal_bound,
    cutoff_extend,
    default_radius_menu,
    gradient_norm_field,
    lp_norm,
    maximal_function,
    mollify,
    sample_on_grid,
)
from degensde.analysis import read_gridfield, write_gridfield, write_gridfield_csv


def gaussian3(x):
    return np.exp(-np.einsum("...i,...i->...", x, x))


@pytest.fixture(scope="module")
def bump_field():
    return sample_on_grid(gaussian3, ((-2.0, 2.0),) * 3, 33)


# ---------------------------------------------------------------- GridField


def test_gridfield_geometry():
    f = sample_on_grid(lambda x: x[..., 0], ((-1.0, 1.0), (0.0, 4.0)), (5, 9))
    assert f.dim == 2
    assert f.resolution == (5, 9)
    assert f.spacing == (0.5, 0.5)
    assert f.cell_volume == 0.25
    nodes = f.nodes()
    assert nodes.shape == (5, 9, 2)
    assert nodes[0, 0].tolist() == [-1.0, 0.0]
    assert nodes[-1, -1].tolist() == [1.0, 4.0]
    assert np.array_equal(f.values, nodes[..., 0])


def test_gridfield_validation():
    with pytest.raises(GridError):
        GridField(box=((0.0, 1.0),), values=np.zeros((4, 4)))
    with pytest.raises(GridError):
        GridField(box=((1.0, 0.0),), values=np.zeros(4))
    with pytest.raises(GridError):
        GridField(box=((0.0, 1.0),), values=np.array([1.0, np.nan, 0.0]))
    with pytest.raises(GridError):
        GridField(box=((0.0, 1.0),), values=np.zeros(1))


def test_gridfield_values_are_read_only():
    f = sample_on_grid(gaussian3, ((-1.0, 1.0),) * 3, 9)
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 5.0


def test_crop_keeps_node_values():
    f = sample_on_grid(lambda x: x[..., 0] + 2.0 * x[..., 1], ((-1.0, 1.0),) * 2, 9)
    inner = f.crop((2, 3))
    assert inner.resolution == (5, 3)
    assert np.array_equal(inner.values, f.values[2:-2, 3:-3])
    assert inner.box[0] == (-0.5, 0.5)
    assert inner.box[1] == (-0.25, 0.25)


# ------------------------------------------------------------- radius menus


def test_default_radius_menu_bounds(bump_field):
    menu = default_radius_menu(bump_field, count=10, r_max=1.0)
    assert len(menu) == 10
    assert menu[0] == pytest.approx(2.0 * max(bump_field.spacing))
    assert menu[-1] == pytest.approx(1.0)
    assert all(a < b for a, b in zip(menu, menu[1:]))


def test_default_radius_menu_caps_at_half_extent(bump_field):
    menu = default_radius_menu(bump_field, count=4)
    assert menu[-1] == pytest.approx(2.0)


# ----------------------------------------------------------- maximal values


def brute_force_maximal(f, radii):
    """Direct-sum ball averages; independent of the FFT code path."""
    spacing = f.spacing
    res = f.resolution
    dim = f.dim
    absf = np.abs(f.values)
    margins = [math.ceil(radii[-1] / spacing[i] - 1e-12) for i in range(dim)]
    window = tuple(slice(m, res[i] - m) for i, m in enumerate(margins))
    out = np.array(absf[window], copy=True)
    for r in radii:
        extents = [math.floor(r / spacing[i] + 1e-12) for i in range(dim)]
        grids = np.meshgrid(*[np.arange(-e, e + 1) for e in extents], indexing="ij")
        offsets = np.stack(grids, axis=-1).reshape(-1, dim)
        scaled = offsets * np.asarray(spacing)
        keep = np.einsum("ni,ni->n", scaled, scaled) <= r * r * (1.0 + 1e-12)
        offsets = offsets[keep]
        for idx in np.ndindex(out.shape):
            base = [idx[i] + margins[i] for i in range(dim)]
            total = 0.0
            for off in offsets:
                total += absf[tuple(base[i] + off[i] for i in range(dim))]
            out[idx] = max(out[idx], total / len(offsets))
    return out


def test_maximal_matches_direct_sum_oracle():
    def wavy(x):
        return np.sin(3.0 * x[..., 0]) * np.cos(2.0 * x[..., 1]) + 0.3 * x[..., 1]

    f = sample_on_grid(wavy, ((-1.0, 1.0),) * 2, 17)
    radii = [0.25, 0.5]
    mf = maximal_function(f, radii)
    oracle = brute_force_maximal(f, radii)
    assert mf.values.shape == oracle.shape
    assert np.max(np.abs(mf.values - oracle)) < 1e-12


def test_maximal_dominates_absolute_value(bump_field):
    radii = default_radius_menu(bump_field, count=6, r_max=1.0)
    mf = maximal_function(bump_field, radii)
    margins = tuple(
        (bump_field.resolution[i] - mf.resolution[i]) // 2 for i in range(3)
    )
    inner = np.abs(bump_field.crop(margins).values)
    assert np.all(mf.values >= inner)


def test_maximal_of_coordinate_field_matches_linear_averages():
    # where the ball sees a single sign, averaging |x_1| over a symmetric
    # stencil returns the center value, so Mf equals |x_1| there
    f = sample_on_grid(lambda x: x[..., 0], ((-2.0, 2.0),) * 2, 33)
    mf = maximal_function(f, [0.25, 0.5])
    coords = mf.nodes()[..., 0]
    single_sign = np.abs(coords) >= 0.5
    gap = np.abs(mf.values - np.abs(coords))
    assert np.max(gap[single_sign]) < 1e-12
    # straddling the sign change the average of |x_1| strictly exceeds it
    center = np.abs(coords) < 1e-12
    assert np.all(mf.values[center] > 0.0)


def test_maximal_far_from_support_is_zero():
    def spot(x):
        return (np.einsum("...i,...i->...", x, x) <= 0.04).astype(float)

    f = sample_on_grid(spot, ((-2.0, 2.0),) * 2, 65)
    mf = maximal_function(f, [0.25])
    nodes = mf.nodes()
    far = np.linalg.norm(nodes, axis=-1) > 0.2 + 0.25 + 0.1
    assert np.max(np.abs(mf.values[far])) < 1e-12


def test_maximal_center_of_indicator_is_one():
    def spot(x):
        return (np.einsum("...i,...i->...", x, x) <= 0.25).astype(float)

    f = sample_on_grid(spot, ((-2.0, 2.0),) * 2, 65)
    mf = maximal_function(f, [0.25])
    center = tuple(r // 2 for r in mf.resolution)
    assert mf.values[center] == pytest.approx(1.0, abs=1e-12)


def test_maximal_sublinearity(bump_field):
    def rim(x):
        r = np.sqrt(np.einsum("...i,...i->...", x, x))
        return ((r >= 0.6) & (r <= 1.2)).astype(float)

    g = sample_on_grid(rim, ((-2.0, 2.0),) * 3, 33)
    radii = default_radius_menu(bump_field, count=5, r_max=0.75)
    mf = maximal_function(bump_field, radii)
    mg = maximal_function(g, radii)
    combined = GridField(
        box=bump_field.box, values=bump_field.values + g.values
    )
    m_sum = maximal_function(combined, radii)
    assert np.max(m_sum.values - (mf.values + mg.values)) <= 1e-10


@given(exponent=st.integers(min_value=-3, max_value=3))
@settings(max_examples=8, deadline=None)
def test_maximal_dyadic_scaling_is_exact(exponent):
    scale = 2.0**exponent
    f = sample_on_grid(gaussian3, ((-1.0, 1.0),) * 3, 17)
    scaled = GridField(box=f.box, values=scale * f.values)
    radii = [0.25, 0.5]
    assert np.array_equal(
        maximal_function(scaled, radii).values,
        scale * maximal_function(f, radii).values,
    )


def test_maximal_menu_validation(bump_field):
    with pytest.raises(GridError):
        maximal_function(bump_field, [])
    with pytest.raises(GridError):
        maximal_function(bump_field, [0.5, 0.25])
    with pytest.raises(GridError):
        maximal_function(bump_field, [0.01])
    with pytest.raises(GridError):
        maximal_function(bump_field, [3.0])


# ------------------------------------------------------------- pair checks


def test_pair_bound_smooth_field(bump_field):
    rng = np.random.Generator(np.random.Philox(key=5))
    radii = default_radius_menu(bump_field, count=8)
    margin = math.ceil(radii[-1] / bump_field.spacing[0] - 1e-12)
    pairs = rng.integers(margin, 33 - margin, size=(800, 2, 3))
    report = check_pointwise_maximal_bound(bump_field, pairs)
    assert report.n_checked == 800
    assert report.fraction_ok >= 0.99
    assert report.constant == 8.0
    assert report.empirical_constant <= 8.0


def test_pair_bound_counts_skipped(bump_field):
    pairs = np.array(
        [
            [[0, 0, 0], [1, 1, 1]],  # outside the valid interior
            [[16, 16, 16], [17, 16, 16]],
        ],
        dtype=np.int64,
    )
    report = check_pointwise_maximal_bound(bump_field, pairs)
    assert report.n_pairs == 2
    assert report.n_skipped == 1
    assert report.n_checked == 1


def test_pair_bound_identical_nodes_pass(bump_field):
    pairs = np.array([[[16, 16, 16], [16, 16, 16]]], dtype=np.int64)
    report = check_pointwise_maximal_bound(bump_field, pairs)
    assert report.fraction_ok == 1.0


def test_gradient_norm_of_linear_field_is_constant():
    f = sample_on_grid(
        lambda x: 3.0 * x[..., 0] - 4.0 * x[..., 1], ((-1.0, 1.0),) * 2, 21
    )
    g = gradient_norm_field(f)
    assert np.allclose(g.values, 5.0, atol=1e-12)


# ----------------------------------------------------------------- lp norms


def test_lp_norm_node_sum_convention():
    f = sample_on_grid(lambda x: np.ones(x.shape[:-1]), ((-2.0, 2.0),) * 3, 33)
    expected = (33**3 * f.cell_volume) ** 0.5
    assert lp_norm(f, 2.0) == pytest.approx(expected, rel=1e-14)


def test_lp_norm_homogeneity(bump_field):
    assert lp_norm(
        GridField(box=bump_field.box, values=4.0 * bump_field.values), 3.0
    ) == pytest.approx(4.0 * lp_norm(bump_field, 3.0), rel=1e-13)


def test_lp_norm_rejects_bad_order(bump_field):
    with pytest.raises(GridError):
        lp_norm(bump_field, 0.5)


# -------------------------------------------------------------- mollifiers


def test_mollifier_weights_are_normalized():
    mol = Mollifier.for_grid(
        sample_on_grid(gaussian3, ((-1.0, 1.0),) * 3, 33), 4
    )
    assert mol.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert mol.support_radius == pytest.approx(0.25)
    assert np.all(mol.weights >= 0.0)


def test_mollifier_rejects_coarse_grid():
    coarse = sample_on_grid(gaussian3, ((-1.0, 1.0),) * 3, 9)
    with pytest.raises(GridError, match="finer grid"):
        Mollifier.for_grid(coarse, 8)


def test_mollify_preserves_constants():
    ones = GridField(box=((-1.0, 1.0),) * 3, values=np.ones((17, 17, 17)))
    smooth = mollify(ones, 2)
    assert np.max(np.abs(smooth.values - 1.0)) < 1e-12


def test_mollify_keeps_mass_bounded():
    f = sample_on_grid(gaussian3, ((-2.0, 2.0),) * 3, 33)
    smooth = mollify(f, 2)
    assert lp_norm(smooth, 1.0) <= lp_norm(f, 1.0) * (1.0 + 1e-6)


def test_mollify_sharpens_with_m():
    def ball(x):
        return (np.einsum("...i,...i->...", x, x) <= 1.0).astype(float)

    f = sample_on_grid(ball, ((-2.0, 2.0),) * 3, 65)

    def error(m):
        smooth = mollify(f, m)
        margins = tuple(
            (f.resolution[i] - smooth.resolution[i]) // 2 for i in range(3)
        )
        inner = f.crop(margins)
        diff = GridField(box=inner.box, values=smooth.values - inner.values)
        return lp_norm(diff, 2.0)

    assert error(8) < error(4)


# ------------------------------------------------------------------ cutoffs


def test_cutoff_is_exact_inside_and_outside():
    f = sample_on_grid(
        lambda x: 2.0 + x[..., 0], ((-3.0, 3.0),) * 3, 25
    )
    cut = cutoff_extend(f, 1)
    nodes = cut.nodes()
    r = np.linalg.norm(nodes, axis=-1)
    assert np.array_equal(cut.values[r <= 1.0], f.values[r <= 1.0])
    assert np.all(cut.values[r >= 2.0] == 0.0)
    band = (r > 1.0) & (r < 2.0)
    ratio = cut.values[band] / f.values[band]
    assert np.all(ratio > 0.0) and np.all(ratio < 1.0)


def test_cutoff_requires_room():
    small = sample_on_grid(gaussian3, ((-1.5, 1.5),) * 3, 9)
    with pytest.raises(GridError, match="box"):
        cutoff_extend(small, 1)


def test_cutoff_rejects_bad_n(bump_field):
    with pytest.raises(GridError):
        cutoff_extend(bump_field, 0)


# ------------------------------------------------------------ serialization


def test_gridfield_binary_roundtrip(tmp_path, bump_field):
    path = tmp_path / "field.bin"
    write_gridfield(bump_field, path)
    back = read_gridfield(path)
    assert back.box == bump_field.box
    assert back.resolution == bump_field.resolution
    assert np.array_equal(back.values, bump_field.values)


def test_gridfield_binary_detects_truncation(tmp_path, bump_field):
    path = tmp_path / "field.bin"
    write_gridfield(bump_field, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(GridError):
        read_gridfield(path)


def test_gridfield_csv_has_header_and_rows(tmp_path):
    f = sample_on_grid(lambda x: x[..., 0], ((0.0, 1.0),) * 2, 3)
    path = tmp_path / "field.csv"
    write_gridfield_csv(f, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x1,x2,value"
    assert len(lines) == 1 + 9
