import numpy as np
import pytest

from cavityflow.geometry import (
    DensityField,
    Domain,
    DomainError,
    distance_to_boundary,
    eval_density,
)


def test_domain_validation():
    with pytest.raises(DomainError):
        Domain(dim=4)
    with pytest.raises(DomainError):
        Domain(dim=2, lower=[0, 0], upper=[0, 1])
    with pytest.raises(DomainError):
        Domain(dim=2, obstructions=[((1.5, 0.5), 0.1)])
    with pytest.raises(DomainError):
        Domain(dim=2, obstructions=[((0.5, 0.5), -0.1)])


def test_disconnected_region_rejected():
    # A wall of circles cutting the unit square in half.
    wall = [((0.5, y), 0.09) for y in np.linspace(0.05, 0.95, 7)]
    with pytest.raises(DomainError):
        Domain(dim=2, obstructions=wall)


def test_distance_to_boundary_plain_box():
    dom = Domain(dim=2)
    assert distance_to_boundary(dom, np.array([0.5, 0.5])) == pytest.approx(0.5)
    assert distance_to_boundary(dom, np.array([0.1, 0.4])) == pytest.approx(0.1)
    # clamps to zero on the boundary
    assert distance_to_boundary(dom, np.array([0.0, 0.3])) == 0.0


def test_distance_to_boundary_obstruction():
    dom = Domain(dim=2, obstructions=[((0.5, 0.5), 0.1)])
    # |p - c| - r = 0.15 - 0.1
    assert distance_to_boundary(dom, np.array([0.65, 0.5])) == pytest.approx(0.05)


def test_constant_density():
    dom = Domain(dim=2)
    df = DensityField("constant", 0.02)
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.05, 0.95, size=(50, 2))
    assert np.all(eval_density(df, dom, pts) == 0.02)


def test_boundary_refined_density_values():
    dom = Domain(dim=2)
    df = DensityField("boundary_refined", h1=0.005, h2=0.025, w=0.025)
    # at distance w from the wall the fine band ends
    assert eval_density(df, dom, np.array([0.025, 0.5])) == pytest.approx(0.005)
    # plugging d = L/2 into the blend gives factor one, hence h2
    assert eval_density(df, dom, np.array([0.5, 0.5])) == pytest.approx(0.025)
    # inside the band
    assert eval_density(df, dom, np.array([0.01, 0.5])) == pytest.approx(0.005)


def test_density_bounds_and_continuity():
    dom = Domain(dim=2)
    df = DensityField("boundary_refined", h1=0.004, h2=0.02, w=0.05)
    xs = np.linspace(1e-6, 0.5, 4001)
    pts = np.column_stack([xs, np.full_like(xs, 0.5)])
    h = eval_density(df, dom, pts)
    assert np.all(h >= df.h1 - 1e-15) and np.all(h <= df.h2 + 1e-15)
    # continuity: no jump exceeding the slope bound times the step
    slope = (df.h2 - df.h1) / (0.5 - df.w)
    assert np.max(np.abs(np.diff(h))) <= slope * (xs[1] - xs[0]) * 1.01


def test_outside_point_rejected():
    dom = Domain(dim=2)
    df = DensityField("constant", 0.02)
    with pytest.raises(DomainError):
        eval_density(df, dom, np.array([1.5, 0.5]))
    dom2 = Domain(dim=2, obstructions=[((0.5, 0.5), 0.2)])
    with pytest.raises(DomainError):
        eval_density(df, dom2, np.array([0.5, 0.5]))


def test_channel_cap_limits_spacing():
    # Two circles leaving a 0.02-wide channel around (0.5, 0.5).
    dom = Domain(dim=2, obstructions=[((0.5, 0.24), 0.25), ((0.5, 0.76), 0.25)])
    base = DensityField("boundary_refined", h1=0.015, h2=0.1, w=0.005)
    capped = DensityField("channel_refined", h1=0.015, h2=0.1, w=0.005)
    gap = 0.02
    mid = np.array([0.5, 0.5])
    h_capped = eval_density(capped, dom, mid)
    assert h_capped <= gap / 2 + 1e-6
    assert h_capped < eval_density(base, dom, mid)
    # channel walls are refined too, so at least two nodes span the gap
    wall_pt = np.array([0.5, 0.49 + 1e-9])
    assert eval_density(capped, dom, wall_pt) <= gap / 2 + 1e-6
    # away from the channel the cap has no effect
    open_pt = np.array([0.07, 0.07])
    assert eval_density(capped, dom, open_pt) == pytest.approx(
        eval_density(base, dom, open_pt)
    )
    # bounded below by the configured fraction of h1
    assert h_capped >= capped.h1 / 8 - 1e-15


def test_density_field_validation():
    with pytest.raises(ValueError):
        DensityField("nope", 0.01)
    with pytest.raises(ValueError):
        DensityField("constant", -0.01)
    with pytest.raises(ValueError):
        DensityField("boundary_refined", 0.05, 0.02, w=0.02)  # h1 > h2
    with pytest.raises(ValueError):
        DensityField("boundary_refined", 0.01, 0.02, w=0.0)
    df = DensityField("boundary_refined", 0.01, 0.02, w=0.6)
    with pytest.raises(ValueError):
        df.validate_for(Domain(dim=2))
