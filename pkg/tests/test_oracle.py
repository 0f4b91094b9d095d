import math

import numpy as np
import pytest

from qcap import oracle
from qcap.geometry import resolve_geometry
from qcap.mesh import Element
from qcap.oracle import EPS0, OracleError, QuadratureSettings


def test_quadrature_of_known_integrals():
    # potential of a unit segment at its own perpendicular bisector, distance 1
    elem = Element((-0.5, 0.0), (0.5, 0.0))
    exact = -(0.5 * math.log(1.25) - 1.0 + 2.0 * math.atan(0.5)) / (2 * math.pi)
    assert oracle.quad_potential(elem, (0.0, 1.0)) == pytest.approx(exact, rel=1e-12)
    # field: (1/2pi) * subtended angle 2*atan(1/2), pointing away
    np.testing.assert_allclose(oracle.quad_field(elem, (0.0, 1.0)), [0.0, 2 * math.atan(0.5) / (2 * math.pi)], atol=1e-15)


def test_guard_rejects_points_on_the_element():
    elem = Element((0.0, 0.0), (1.0, 0.0))
    with pytest.raises(OracleError, match="1e-6"):
        oracle.quad_potential(elem, (0.5, 1e-8))
    with pytest.raises(OracleError):
        oracle.quad_field(elem, (1.0, 0.0))


def test_settings_validation():
    with pytest.raises(ValueError):
        QuadratureSettings(abs_tol=0)
    with pytest.raises(ValueError):
        QuadratureSettings(max_subdivisions=0)


def test_analytic_values_match_frozen_numbers():
    assert oracle.analytic_coax(1e-3, 2e-3, 1.0) == pytest.approx(8.0261e-11, rel=1e-4)
    assert oracle.analytic_two_layer_coax(1e-3, 1.5e-3, 2e-3, 2.0, 1.0) == pytest.approx(1.1344e-10, rel=1e-4)
    assert oracle.analytic_wire_over_ground(10e-3, 1e-3) == pytest.approx(1.8587e-11, rel=1e-4)
    assert oracle.analytic_coax(1.0, math.e, 1.0) == pytest.approx(2 * math.pi * EPS0, rel=1e-15)


def test_two_layer_reduces_to_single():
    assert oracle.analytic_two_layer_coax(1, 1.5, 2, 3.0, 3.0) == pytest.approx(oracle.analytic_coax(1, 2, 3.0), rel=1e-14)


@pytest.mark.parametrize(
    "builder, n_cond, grounded",
    [
        (oracle.coax_cross_section, 2, False),
        (oracle.two_layer_coax_cross_section, 2, False),
        (oracle.wire_over_ground_cross_section, 1, True),
    ],
)
def test_structures_resolve(builder, n_cond, grounded):
    rg = resolve_geometry(builder())
    assert rg.n_cond == n_cond and rg.ground_plane is grounded
    assert all(area > 0 for area in rg.loop_areas)
