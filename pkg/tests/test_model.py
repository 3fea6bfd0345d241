import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fwexit.model import (
    FKind,
    ModelSpec,
    NormKind,
    SpectralField,
    basis_matrix,
    builtin_spec,
    in_domain,
    inverse_basis_matrix,
    negative_type_constant,
    parse_model_spec,
    point_values,
    semigroup_apply,
    sup_norm,
    unit_mode,
    values_to_field,
    zero_field,
)


def heat_spec(n=4, norm="sup_on_grid"):
    return ModelSpec(n, tuple(-float(k * k) for k in range(1, n + 1)),
                     (1.0,) * n, FKind("zero"), norm_kind=NormKind(norm))


class TestSemigroup:
    def test_t_zero_is_identity(self):
        spec = heat_spec()
        x = SpectralField([0.3, -1.2, 0.5, 2.0])
        np.testing.assert_array_equal(semigroup_apply(spec, 0.0, x).coeffs, x.coeffs)

    def test_heat_mode2_half_second(self):
        # mode 2 decays at rate 4: factor exp(-2) after t = 0.5
        spec = heat_spec()
        out = semigroup_apply(spec, 0.5, unit_mode(spec, 2))
        assert out.coeffs[1] == pytest.approx(math.exp(-2.0), rel=1e-15)
        assert out.coeffs[0] == 0 and out.coeffs[2] == 0 and out.coeffs[3] == 0

    def test_ou_log2_halves(self):
        spec = builtin_spec("ou")
        out = semigroup_apply(spec, math.log(2.0), SpectralField([1.0]))
        assert out.coeffs[0] == pytest.approx(0.5, rel=1e-14)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            semigroup_apply(heat_spec(), -0.1, zero_field(heat_spec()))

    @settings(max_examples=25, deadline=None)
    @given(s=st.floats(0.0, 2.0), t=st.floats(0.0, 2.0))
    def test_semigroup_property(self, s, t):
        spec = heat_spec()
        x = SpectralField([0.7, -0.2, 0.1, 0.4])
        a = semigroup_apply(spec, s, semigroup_apply(spec, t, x))
        b = semigroup_apply(spec, s + t, x)
        np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=1e-12, atol=1e-300)

    def test_negative_type_euclidean_exact(self):
        spec = heat_spec(norm="euclidean")
        x = SpectralField([0.7, -0.2, 0.1, 0.4])
        for t in (0.1, 0.5, 2.0):
            decayed = sup_norm(spec, semigroup_apply(spec, t, x))
            assert decayed <= math.exp(-spec.omega * t) * sup_norm(spec, x) * (1 + 1e-12)

    def test_negative_type_grid_constant(self):
        spec = heat_spec(norm="sup_on_grid")
        c = negative_type_constant(spec)
        assert c >= 1.0
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = SpectralField(rng.standard_normal(4))
            for t in (0.05, 0.3, 1.0):
                decayed = sup_norm(spec, semigroup_apply(spec, t, x))
                bound = c * math.exp(-spec.omega * t) * sup_norm(spec, x)
                assert decayed <= bound * (1 + 1e-9)


class TestNorms:
    def test_zero_field(self):
        assert sup_norm(heat_spec(), zero_field(heat_spec())) == 0.0

    def test_single_mode_grid_sup(self):
        # |c e_1| = |c| sqrt(2/pi) max_j sin(xi_j), close to |c| sqrt(2/pi)
        spec = heat_spec()
        c = -2.5
        got = sup_norm(spec, unit_mode(spec, 1, c))
        m = spec.norm_kind.collocation_points
        xi = np.arange(1, m + 1) * math.pi / (m + 1)
        expected = abs(c) * math.sqrt(2 / math.pi) * np.max(np.sin(xi))
        assert got == pytest.approx(expected, rel=1e-14)
        assert got == pytest.approx(abs(c) * math.sqrt(2 / math.pi), rel=1e-2)

    def test_euclidean_pythagoras(self):
        spec = ModelSpec(2, (-1.0, -4.0), (1.0, 1.0))
        assert sup_norm(spec, SpectralField([3.0, 4.0])) == pytest.approx(5.0)

    @settings(max_examples=25, deadline=None)
    @given(scale=st.floats(-4.0, 4.0))
    def test_homogeneity(self, scale):
        spec = heat_spec()
        x = SpectralField([0.3, -1.0, 0.2, 0.5])
        assert sup_norm(spec, SpectralField(scale * x.coeffs)) == pytest.approx(
            abs(scale) * sup_norm(spec, x), rel=1e-12, abs=1e-300)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=4, max_size=4),
           st.lists(st.floats(-2, 2), min_size=4, max_size=4))
    def test_triangle_inequality(self, a, b):
        spec = heat_spec()
        fa, fb = SpectralField(a), SpectralField(b)
        s = sup_norm(spec, SpectralField(fa.coeffs + fb.coeffs))
        assert s <= sup_norm(spec, fa) + sup_norm(spec, fb) + 1e-12


class TestDomain:
    def test_origin_inside(self):
        assert in_domain(builtin_spec("ou"), zero_field(builtin_spec("ou")))

    def test_boundary_is_outside_open_set(self):
        spec = ModelSpec(2, (-1.0, -4.0), (1.0, 1.0), domain_radius=1.0)
        assert not in_domain(spec, SpectralField([1.0, 0.0]))
        assert in_domain(spec, SpectralField([0.99, 0.0]))


class TestGrid:
    def test_transform_round_trip_exact(self):
        for n in (1, 4, 8, 16):
            spec = heat_spec(n)
            p = inverse_basis_matrix(spec) @ basis_matrix(spec)
            np.testing.assert_allclose(p, np.eye(n), atol=1e-12)

    def test_values_round_trip(self):
        spec = heat_spec(8)
        rng = np.random.default_rng(1)
        c = rng.standard_normal(8)
        back = values_to_field(spec, point_values(spec, SpectralField(c)))
        np.testing.assert_allclose(back.coeffs, c, atol=1e-12)

    def test_default_collocation_count(self):
        spec = heat_spec(8)
        assert spec.norm_kind.collocation_points == 33

    def test_minimum_collocation_enforced(self):
        with pytest.raises(ValueError):
            ModelSpec(4, (-1.0, -4.0, -9.0, -16.0), (1.0,) * 4,
                      norm_kind=NormKind("sup_on_grid", 7))


class TestValidation:
    def test_nonnegative_eigenvalue_rejected(self):
        with pytest.raises(ValueError):
            ModelSpec(2, (-1.0, 0.0), (1.0, 1.0))

    def test_radius_positive(self):
        with pytest.raises(ValueError):
            ModelSpec(1, (-1.0,), (1.0,), domain_radius=0.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ModelSpec(2, (-1.0,), (1.0, 1.0))

    def test_nan_coeffs_rejected(self):
        with pytest.raises(ValueError):
            SpectralField([math.nan])


class TestSerialization:
    def test_round_trip(self):
        for name in ("ou", "heat_cubic", "heat_mult", "stagnation", "cubic1d"):
            spec = builtin_spec(name)
            again = parse_model_spec(json.loads(spec.to_json()))
            assert again == spec

    def test_unknown_key_rejected(self):
        doc = builtin_spec("ou").to_dict()
        doc["extra"] = 1
        with pytest.raises(ValueError, match="unknown keys"):
            parse_model_spec(doc)

    def test_nested_unknown_key_rejected(self):
        doc = builtin_spec("heat_mult").to_dict()
        doc["b_kind"]["scale"] = 2
        with pytest.raises(ValueError, match="unknown keys"):
            parse_model_spec(doc)

    def test_missing_required_rejected(self):
        with pytest.raises(ValueError, match="missing required"):
            parse_model_spec({"mode_count": 1})

    def test_builtin_with_overrides(self):
        spec = parse_model_spec({"builtin": "heat_cubic", "mode_count": 4,
                                 "domain_radius": 2.0})
        assert spec.mode_count == 4
        assert spec.domain_radius == 2.0
        assert spec.f_kind.kind == "cubic"

    def test_unknown_builtin(self):
        with pytest.raises(ValueError, match="unknown builtin"):
            builtin_spec("nope")
