import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hpl.errors import DegenerateError, DomainError, NotCenteredError
from hpl.hermite import TransformSpec, hermite_coefficients, hermite_eval, transform_path
from hpl.pathgen import Method, SamplePath, standard_normals

finite = st.floats(-10, 10, allow_nan=False)


def rodrigues(k, x):
    """H_k from the derivative definition, via sympy-free finite algebra."""
    # explicit sum H_k(x) = k! sum_m (-1)^m x^(k-2m) / (m! (k-2m)! 2^m)
    return math.factorial(k) * sum(
        (-1) ** m * x ** (k - 2 * m) / (math.factorial(m) * math.factorial(k - 2 * m) * 2 ** m)
        for m in range(k // 2 + 1)
    )


class TestHermiteEval:
    def test_examples(self):
        assert hermite_eval(2, 1.0) == 0.0
        assert hermite_eval(4, 0.0) == 3.0
        assert hermite_eval(3, 2.0) == 2.0
        assert hermite_eval(0, 5.0) == 1.0

    @given(st.integers(0, 12), finite)
    def test_matches_explicit_sum(self, k, x):
        assert hermite_eval(k, x) == pytest.approx(rodrigues(k, x), rel=1e-9, abs=1e-6)

    def test_negative_degree(self):
        with pytest.raises(DomainError):
            hermite_eval(-1, 0.0)

    def test_orthogonality(self):
        z = standard_normals(2024, 10 ** 6)
        H = [hermite_eval(k, z) for k in range(5)]
        for j in range(5):
            for k in range(5):
                prod = H[j] * H[k]
                se = prod.std() / math.sqrt(z.size)
                target = math.factorial(k) if j == k else 0.0
                assert abs(prod.mean() - target) < 3 * se + 1e-12, (j, k)


class TestTransformSpec:
    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_builtin_invariants(self, m):
        spec = TransformSpec.builtin(f"H{m}")
        assert spec.rank == m
        assert spec.coefficients[m - 1] == math.factorial(m)
        assert all(c == 0 for k, c in enumerate(spec.coefficients, 1) if k != m)
        assert spec.variance == math.factorial(m)

    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    @settings(max_examples=30)
    @given(x=arrays(float, 20, elements=finite))
    def test_builtin_closed_form_matches_series(self, m, x):
        spec = TransformSpec.builtin(f"H{m}")
        general = TransformSpec.general(spec.coefficients)
        assert np.allclose(spec(x), general(x), rtol=1e-10, atol=1e-8)
        assert np.allclose(spec(x), hermite_eval(m, x), rtol=1e-10, atol=1e-8)

    def test_general_rank(self):
        spec = TransformSpec.general([0.0, 0.0, 2.0, 1.0])
        assert spec.rank == 3 and spec.kind == "General"

    def test_record_round_trip(self):
        for rec in ("H3", {"coefficients": [0.0, 1.5, -2.0]}):
            spec = TransformSpec.from_record(rec)
            assert TransformSpec.from_record(spec.to_record()) == spec

    def test_scale(self):
        spec = TransformSpec.general([1.0, 0.5])
        big = TransformSpec.general([3.0, 1.5])
        assert big.variance == pytest.approx(9 * spec.variance)


class TestTransformPath:
    def test_examples(self):
        assert np.all(transform_path(TransformSpec.builtin("H2"), np.zeros(5)) == -1.0)
        x = standard_normals(3, 100)
        assert np.array_equal(transform_path(TransformSpec.builtin("H1"), x), x)
        assert transform_path(TransformSpec.builtin("H3"), np.array([1.0]))[0] == -2.0

    def test_sample_path_metadata_kept(self):
        p = SamplePath(np.array([0.5, -1.0]), 7, Method.CHOLESKY, "abc")
        q = transform_path(TransformSpec.builtin("H2"), p)
        assert q.seed == 7 and q.method is Method.CHOLESKY and q.model_fingerprint == "abc"
        assert np.allclose(q.values, [-0.75, 0.0])

    def test_empty(self):
        with pytest.raises(DomainError):
            transform_path(TransformSpec.builtin("H1"), np.array([]))

    @given(arrays(float, 7, elements=finite), arrays(float, 5, elements=finite))
    def test_commutes_with_concatenation(self, a, b):
        spec = TransformSpec.builtin("H4")
        whole = transform_path(spec, np.concatenate([a, b]))
        assert np.array_equal(whole, np.concatenate([transform_path(spec, a), transform_path(spec, b)]))

    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_variance_on_white_noise(self, m):
        z = standard_normals(100 + m, 10 ** 5)
        eps = transform_path(TransformSpec.builtin(f"H{m}"), z)
        assert eps.var() == pytest.approx(math.factorial(m), rel=0.05)

    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_variance_within_three_standard_errors(self, m):
        # SE of the sample variance from E H_m^4 by exact Gauss-Hermite quadrature
        x, w = np.polynomial.hermite_e.hermegauss(120)
        w = w / math.sqrt(2 * math.pi)
        n = 10 ** 5
        se = math.sqrt(((w * hermite_eval(m, x) ** 4).sum() - math.factorial(m) ** 2) / n)
        eps = transform_path(TransformSpec.builtin(f"H{m}"), standard_normals(100 + m, n))
        assert abs(eps.var() - math.factorial(m)) < 3 * se


class TestCoefficients:
    def test_h2(self):
        spec = hermite_coefficients(lambda u: u * u - 1, k_max=6)
        assert spec.rank == 2
        assert spec.coefficients[1] == pytest.approx(2.0, abs=1e-12)
        assert np.allclose(np.delete(spec.coefficients, 1), 0.0, atol=1e-10)

    def test_cube(self):
        spec = hermite_coefficients(lambda u: u ** 3, k_max=6)
        assert spec.rank == 1
        assert spec.coefficients[0] == pytest.approx(3.0, abs=1e-12)
        assert spec.coefficients[2] == pytest.approx(6.0, abs=1e-12)

    def test_identity(self):
        spec = hermite_coefficients(lambda u: u, k_max=3)
        assert spec.rank == 1 and spec.coefficients[0] == pytest.approx(1.0)

    def test_reconstructs_smooth_function(self):
        # g(u) = sin(u): odd, centered; C_k = E[sin Z H_k(Z)] = e^{-1/2} (-1)^((k-1)/2) for odd k
        spec = hermite_coefficients(np.sin, k_max=9)
        for k in (1, 3, 5, 7, 9):
            assert spec.coefficients[k - 1] == pytest.approx(math.exp(-0.5) * (-1) ** ((k - 1) // 2), abs=1e-10)

    def test_errors(self):
        with pytest.raises(NotCenteredError):
            hermite_coefficients(lambda u: u * u, k_max=4)
        with pytest.raises(DegenerateError):
            hermite_coefficients(lambda u: 0.0 * u, k_max=4)
        with pytest.raises(DomainError):
            hermite_coefficients(lambda u: u, k_max=6, quad_order=3)
