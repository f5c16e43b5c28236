"""Material law tests, anchored by a brute-force Voigt inversion oracle."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpgelast.material import (
    MaterialParams,
    SymTensor2,
    SkewScalar,
    stiffness_apply,
    compliance_apply,
    compliance_apply_array,
    stiffness_apply_array,
    poisson_ratio,
    sigma_zz,
)


def voigt_stiffness(m):
    """In-plane stiffness as a 3x3 matrix acting on (xx, yy, xy)."""
    lam, mu = m.lam, m.mu
    return np.array(
        [
            [lam + 2 * mu, lam, 0.0],
            [lam, lam + 2 * mu, 0.0],
            [0.0, 0.0, 2 * mu],
        ]
    )


def oracle_compliance(sig, m):
    """Invert the Voigt stiffness numerically; independent of the closed form."""
    v = np.linalg.solve(voigt_stiffness(m), np.array([sig.xx, sig.yy, sig.xy]))
    return SymTensor2(*v)


@pytest.fixture
def unit_material():
    return MaterialParams(lam=1.0, mu=1.0)


def test_identity_strain_unit_material(unit_material):
    out = stiffness_apply(SymTensor2(1.0, 1.0, 0.0), unit_material)
    assert out == SymTensor2(4.0, 4.0, 0.0)


def test_zero_strain(unit_material):
    assert stiffness_apply(SymTensor2(0, 0, 0), unit_material) == SymTensor2(0, 0, 0)


def test_pure_shear(unit_material):
    out = stiffness_apply(SymTensor2(0.0, 0.0, 1.0), unit_material)
    assert out == SymTensor2(0.0, 0.0, 2.0)


def test_compliance_of_4I(unit_material):
    out = compliance_apply(SymTensor2(4.0, 4.0, 0.0), unit_material)
    assert np.allclose([out.xx, out.yy, out.xy], [1.0, 1.0, 0.0], atol=1e-14)


def test_compliance_zero(unit_material):
    out = compliance_apply(SymTensor2(0, 0, 0), unit_material)
    assert out == SymTensor2(0.0, 0.0, 0.0)


def test_compliance_matches_voigt_oracle():
    rng = np.random.default_rng(7)
    m = MaterialParams(lam=2.0, mu=0.7)
    for _ in range(200):
        x = SymTensor2(*rng.standard_normal(3))
        closed = compliance_apply(stiffness_apply(x, m), m)
        assert np.allclose([closed.xx, closed.yy, closed.xy], [x.xx, x.yy, x.xy], atol=1e-13)
        direct = compliance_apply(x, m)
        oracle = oracle_compliance(x, m)
        assert np.allclose(
            [direct.xx, direct.yy, direct.xy], [oracle.xx, oracle.yy, oracle.xy], rtol=1e-12, atol=1e-15
        )


@given(
    st.floats(0.0, 50.0),
    st.floats(0.05, 50.0),
    st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10)),
)
def test_roundtrip_property(lam, mu, comps):
    m = MaterialParams(lam=lam, mu=mu)
    x = SymTensor2(*comps)
    y = compliance_apply(stiffness_apply(x, m), m)
    scale = max(1.0, abs(x.xx), abs(x.yy), abs(x.xy))
    assert abs(y.xx - x.xx) <= 1e-12 * scale
    assert abs(y.yy - x.yy) <= 1e-12 * scale
    assert abs(y.xy - x.xy) <= 1e-12 * scale


def test_poisson_ratio_values():
    assert poisson_ratio(MaterialParams(lam=1.0, mu=1.0)) == 0.25
    assert poisson_ratio(MaterialParams(lam=0.0, mu=3.0)) == 0.0
    steel = MaterialParams(lam=123.0, mu=79.3)
    assert abs(poisson_ratio(steel) - 0.304) < 5e-4


def test_invalid_material_rejected():
    with pytest.raises(ValueError):
        MaterialParams(lam=1.0, mu=0.0)
    with pytest.raises(ValueError):
        MaterialParams(lam=-0.5, mu=1.0)


def test_skew_part_annihilated(unit_material):
    w = SkewScalar(3.0).as_matrix()
    out = stiffness_apply_array(w, unit_material)
    assert np.allclose(out, 0.0, atol=1e-15)
    out = compliance_apply_array(w, unit_material)
    assert np.allclose(out, 0.0, atol=1e-15)


def test_array_paths_match_scalar(unit_material):
    rng = np.random.default_rng(3)
    mats = rng.standard_normal((5, 2, 2))
    sym = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    stiff = stiffness_apply_array(sym, unit_material)
    comp = compliance_apply_array(sym, unit_material)
    for k in range(5):
        s = SymTensor2.from_matrix(sym[k])
        assert np.allclose(stiff[k], stiffness_apply(s, unit_material).as_matrix(), atol=1e-14)
        assert np.allclose(comp[k], compliance_apply(s, unit_material).as_matrix(), atol=1e-14)


def test_out_of_plane_stress(unit_material):
    assert sigma_zz(SymTensor2(1.0, 2.0, 5.0), unit_material) == 3.0
