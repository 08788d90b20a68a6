import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leglab.contact import JetSpec, jet_distance
from leglab.errors import PreconditionViolation
from leglab.paths import connect_legendrian, path_jet


def jet(x, y, z0, n=1):
    """Order-2 jet with x, y derivative rows given and z from the Legendrian rule."""
    return JetSpec.from_xy(0.0, np.reshape(x, (n, 3)), np.reshape(y, (n, 3)), z0)


A = jet([2, 0.5, 0.1], [0, 1, 0], 0.0)
B = jet([3j, 0.2, 0], [1, 1, -0.3], 1.0 + 1j)


def endpoint_error(path, ja, jb):
    return max(jet_distance(path_jet(path, 0.0, 2), JetSpec(0.0, 2, ja.x, ja.y, ja.z)),
               jet_distance(path_jet(path, 1.0, 2), JetSpec(1.0, 2, jb.x, jb.y, jb.z)))


def test_equal_jets_give_constant_path():
    path = connect_legendrian(A, A)
    assert path.report["degenerate"]
    assert path.length() == 0
    assert np.allclose(path.values(np.linspace(0, 1, 5)), A.value()[:, None])


def test_jets_matched_at_both_ends():
    path = connect_legendrian(A, B)
    assert endpoint_error(path, A, B) <= 1e-9


def test_z_follows_legendrian_rule():
    path = connect_legendrian(A, B)
    t = np.linspace(0.05, 0.95, 7)
    h = 1e-5
    dz = (path.z(t + h) - path.z(t - h)) / (2 * h)
    assert np.max(np.abs(dz - path.derivatives(t)[-1])) <= 1e-6
    assert abs(path.z(np.array([1.0]))[0] - B.z[0]) <= 1e-10


def test_floor_respected():
    # |x| is 2 and 3 at the ends; with floor 1 it must stay above 1 throughout
    path = connect_legendrian(A, B, rho=1.0, mask=(0,))
    t = np.linspace(0, 1, 20001)
    assert np.min(np.abs(path.values(t)[0])) > 1.0
    assert endpoint_error(path, A, B) <= 1e-9


def test_floor_above_endpoints():
    with pytest.raises(PreconditionViolation):
        connect_legendrian(A, B, rho=5.0, mask=(0,))


def test_dimension_mismatch():
    two = jet(np.zeros(6), np.zeros(6), 0.0, n=2)
    with pytest.raises(PreconditionViolation):
        connect_legendrian(A, two)


cplx = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)


@given(st.lists(cplx, min_size=6, max_size=6), st.lists(cplx, min_size=6, max_size=6), cplx, cplx)
def test_random_jets_connected(xy_a, xy_b, za, zb):
    ja = jet(xy_a[:3], xy_a[3:], za)
    jb = jet(xy_b[:3], xy_b[3:], zb)
    path = connect_legendrian(ja, jb)
    assert endpoint_error(path, ja, jb) <= 1e-9
