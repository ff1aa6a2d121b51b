import numpy as np
import pytest

from poroflow.casagrande import DamGeometry, casagrande_surface


def worked_example_dam():
    # entry point at d = 4 horizontally from the focus with head H = 3:
    # focal parameter sqrt(4^2 + 3^2) - 4 = 1 (3-4-5 triangle), parabola
    # y^2 = 2x + 1; see docs/casagrande.md
    return DamGeometry(
        upstream_toe_x=0.0, downstream_toe_x=6.1, upstream_slope=1.0, height=3.5
    )


def test_zero_head_surface_at_base():
    dam = DamGeometry(upstream_toe_x=0.0, downstream_toe_x=5.0,
                      upstream_slope=1.5, height=2.0, base_y=0.3)
    sol = casagrande_surface(dam, 0.0)
    xs = np.linspace(0.0, 5.0, 40)
    np.testing.assert_allclose(sol.height(xs), 0.3, atol=1e-12)


def test_monotone_non_increasing_downstream():
    dam = worked_example_dam()
    sol = casagrande_surface(dam, 3.0)
    xs, ys = sol.sample(500)
    assert np.all(np.diff(ys) <= 1e-12)


def test_entry_point_correction():
    dam = worked_example_dam()
    sol = casagrande_surface(dam, 3.0)
    # A' sits 0.3 * Delta upstream of A, Delta = m_u H
    assert sol.entry_x == pytest.approx(0.0 + 0.7 * 1.0 * 3.0, rel=1e-12)


def test_worked_example_values():
    dam = worked_example_dam()
    sol = casagrande_surface(dam, 3.0)
    assert sol.focal == pytest.approx(1.0, rel=1e-12)
    # y(x) measured with x_f = distance upstream of the focus
    assert sol.height(dam.downstream_toe_x) == pytest.approx(1.0, rel=1e-12)
    assert sol.height(dam.downstream_toe_x - 1.5) == pytest.approx(2.0, rel=1e-12)
    assert sol.height(sol.entry_x) == pytest.approx(3.0, rel=1e-12)
    # upstream of the entry point the surface is the reservoir level
    assert sol.height(0.5) == pytest.approx(3.0)


def test_focus_directrix_property():
    # every parabola point is equidistant from the focus and the directrix
    dam = worked_example_dam()
    sol = casagrande_surface(dam, 3.0)
    focus = np.array([dam.downstream_toe_x, 0.0])
    a = sol.focal
    xs = np.linspace(sol.entry_x + 1e-6, dam.downstream_toe_x, 64)
    ys = sol.height(xs)
    on_parabola = ys < 3.0 - 1e-9  # below the head clip
    for x, y in zip(xs[on_parabola], ys[on_parabola]):
        dist_focus = np.hypot(x - focus[0], y - focus[1])
        dist_directrix = (dam.downstream_toe_x + a) - x
        assert dist_focus == pytest.approx(dist_directrix, rel=1e-12)


def test_downstream_of_focus_zero():
    dam = worked_example_dam()
    sol = casagrande_surface(dam, 2.0)
    assert sol.height(dam.downstream_toe_x + 0.5) == 0.0


def test_head_validation():
    dam = worked_example_dam()
    with pytest.raises(ValueError, match="exceeds dam height"):
        casagrande_surface(dam, 4.0)
    with pytest.raises(ValueError, match="non-negative"):
        casagrande_surface(dam, -0.1)


def test_geometry_validation():
    with pytest.raises(ValueError, match="downstream"):
        DamGeometry(upstream_toe_x=2.0, downstream_toe_x=1.0,
                    upstream_slope=1.0, height=1.0)
    with pytest.raises(ValueError, match="height"):
        DamGeometry(upstream_toe_x=0.0, downstream_toe_x=1.0,
                    upstream_slope=1.0, height=0.0)
