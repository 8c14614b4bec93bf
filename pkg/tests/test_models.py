import numpy as np
import pytest

from sasakilab import models
from sasakilab.errors import ConfigError


def test_origin_values(r3):
    o = np.zeros(3)
    np.testing.assert_allclose(r3.field("eta", o), [0.0, 0.0, 0.5])
    np.testing.assert_allclose(r3.field("xi", o), [0.0, 0.0, 2.0])
    assert r3.field("eta", o) @ r3.field("xi", o) == 1.0
    np.testing.assert_allclose(r3.field("metric", o), np.diag([0.25] * 3))


def test_metric_at_y1(r3):
    g = r3.field("metric", np.array([0.0, 1.0, 0.0]))
    assert g[0, 0] == pytest.approx(0.5)
    assert g[0, 2] == pytest.approx(-0.25)
    assert g[2, 0] == pytest.approx(-0.25)


@pytest.mark.parametrize("n", [1, 2])
def test_phi_annihilates_xi_exactly(n):
    A = models.standard_sasakian(n)
    pts = models.self_check_points(A.dim, 64, 6)
    out = np.einsum("pkj,pj->pk", A.field("phi", pts), A.field("xi", pts))
    assert np.all(out == 0.0)


def test_bad_n_and_name():
    with pytest.raises(ConfigError):
        models.standard_sasakian(3)
    with pytest.raises(ConfigError):
        models.model_by_name("sasakian_r7")


def test_model_by_name(r5):
    A = models.model_by_name("sasakian_r5")
    assert A.dim == 5 and A.n == 2 and A.name == "sasakian_r5"


def test_self_check_points_seeded():
    a = models.self_check_points(5, 10, 3)
    b = models.self_check_points(5, 10, 3)
    np.testing.assert_array_equal(a, b)
    assert np.abs(a).max() <= models.SAMPLE_BOX
