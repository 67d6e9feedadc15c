import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_screener.linalg import effective_rank, trace
from spectral_screener.models import (
    AssumptionViolationError,
    FactorParams,
    PolyDecayParams,
    build_explicit,
    build_factor,
    build_poly_decay,
    identity_model,
    model_spectrum_matches,
    random_orthonormal,
    sample_gaussian,
    sample_subgaussian_rotated,
)


class TestFactorModel:
    def test_two_factor_spectrum_and_effective_rank(self):
        model = build_factor(FactorParams(p=100, r=2, factor_strengths=(2.0, 1.0), noise_var=1.0))
        np.testing.assert_allclose(model.true_spectrum[:3], [2.01, 1.01, 0.01], atol=1e-12)
        # closed form: (sum strengths + noise) / (top strength + noise/p)
        assert effective_rank(model.sigma) == pytest.approx(4.0 / 2.01, rel=1e-9)
        assert model_spectrum_matches(model)

    def test_rank_one(self):
        model = build_factor(FactorParams(p=10, r=1, factor_strengths=(1.0,), noise_var=0.0))
        assert effective_rank(model.sigma) == pytest.approx(1.0)

    def test_trace_is_strength_sum(self):
        model = build_factor(FactorParams(p=10, r=3, factor_strengths=(3.0, 2.0, 1.0)))
        assert trace(model.sigma) == pytest.approx(6.0)

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            FactorParams(p=3, r=3, factor_strengths=(3.0, 2.0, 1.0))
        with pytest.raises(ValueError):
            FactorParams(p=10, r=2, factor_strengths=(1.0, 2.0))

    def test_eigenvectors_orthonormal(self):
        model = build_factor(FactorParams(p=40, r=3, factor_strengths=(3.0, 2.0, 1.0), noise_var=0.5))
        v = model.true_eigenvectors
        assert np.abs(v.T @ v - np.eye(40)).max() < 1e-10


class TestPolyDecay:
    def test_k_squared_accepted_with_feasible_gap_constant(self):
        # direct scan: min_k gap_k * k^3 = 3/4, attained at k=1, so c3l=0.75 passes
        params = PolyDecayParams(p=50, beta1=2, beta2=2, beta3=3, c3l=0.75)
        model = build_poly_decay(params)
        np.testing.assert_allclose(model.true_spectrum, np.arange(1, 51.0) ** -2.0)

    def test_k_squared_rejected_at_unit_gap_constant(self):
        # gap at k=1 is 1 - 1/4 = 0.75 < 1 * 1^-3
        with pytest.raises(AssumptionViolationError) as err:
            build_poly_decay(PolyDecayParams(p=50, beta1=2, beta2=2, beta3=3, c3l=1.0))
        assert err.value.index == 1

    def test_k_squared_rejected_with_beta3_two(self):
        with pytest.raises(AssumptionViolationError):
            build_poly_decay(PolyDecayParams(p=50, beta1=2, beta2=2, beta3=2.5, c3l=1.0))

    def test_p_one_trivially_accepted(self):
        model = build_poly_decay(PolyDecayParams(p=1, beta1=2, beta2=2, beta3=3))
        np.testing.assert_allclose(model.true_spectrum, [1.0])

    def test_rotated_matches_spectrum(self):
        model = build_poly_decay(PolyDecayParams(p=20, beta1=2, beta2=2, beta3=3, c3l=0.75, rotation_seed=4))
        assert model_spectrum_matches(model)

    def test_custom_rule_envelope_violation_names_index(self):
        def rule(k):
            lam = k**-2.0
            lam[4] *= 1.3  # above the upper envelope at k=5, still monotone
            return lam

        with pytest.raises(AssumptionViolationError) as err:
            build_poly_decay(
                PolyDecayParams(p=10, beta1=2, beta2=2, beta3=3, c3l=0.5, eigenvalue_rule=rule)
            )
        assert err.value.index == 5


def brute_force_assumption_scan(lam, params) -> bool:
    """Independent oracle: full pairwise scan of both envelope conditions."""
    p = lam.size
    for k in range(1, p + 1):
        val = lam[k - 1]
        if not params.c2l * k**-params.beta2 <= val * (1 + 1e-12):
            return False
        if not val <= params.c1l * k**-params.beta1 * (1 + 1e-12):
            return False
        others = np.abs(np.delete(lam, k - 1) - val)
        if others.size and others.min() * (1 + 1e-12) < params.c3l * k**-params.beta3:
            return False
    return True


@settings(max_examples=120, deadline=None, derandomize=True)
@given(
    st.integers(min_value=1, max_value=25),
    st.floats(min_value=1.2, max_value=3.0),
    st.floats(min_value=0.3, max_value=1.5),
    st.integers(min_value=0, max_value=5000),
)
def test_poly_acceptance_equals_pairwise_scan(p, beta, c3l, seed):
    rng = np.random.default_rng(seed)
    lam = np.arange(1, p + 1, dtype=float) ** -beta
    if p > 1 and rng.random() < 0.5:
        idx = int(rng.integers(0, p))
        lam[idx] *= rng.uniform(0.2, 2.0)  # may or may not break the envelopes
    params = PolyDecayParams(
        p=p, beta1=beta, beta2=beta, beta3=beta + 1.0, c3l=c3l, eigenvalue_rule=lambda k: lam
    )
    descending = not np.any(np.diff(lam) > 0)
    expected = descending and brute_force_assumption_scan(lam, params)
    try:
        build_poly_decay(params)
        accepted = True
    except AssumptionViolationError:
        accepted = False
    assert accepted == expected


class TestSamplers:
    def test_zero_covariance_gives_zero_rows(self):
        model = build_explicit(np.zeros(4))
        data = sample_gaussian(model, 5, seed=1)
        assert np.all(data.rows == 0.0)

    def test_large_sample_covariance_close_to_identity(self):
        model = identity_model(8)
        data = sample_gaussian(model, 100_000, seed=2)
        centered = data.rows - data.rows.mean(axis=0)
        cov = centered.T @ centered / data.n
        assert np.abs(cov - np.eye(8)).max() < 0.02

    def test_fixed_seed_reproducible(self):
        model = identity_model(5)
        a = sample_gaussian(model, 10, seed=42)
        b = sample_gaussian(model, 10, seed=42)
        assert np.array_equal(a.rows, b.rows)
        c = sample_subgaussian_rotated(model, 10, seed=42, component_law="uniform")
        d = sample_subgaussian_rotated(model, 10, seed=42, component_law="uniform")
        assert np.array_equal(c.rows, d.rows)

    def test_rademacher_identity_entries_are_signs(self):
        model = identity_model(2)
        data = sample_subgaussian_rotated(model, 50, seed=3, component_law="rademacher")
        assert set(np.unique(data.rows)) == {-1.0, 1.0}

    def test_uniform_component_range(self):
        lam = np.array([4.0, 1.0])
        model = build_explicit(lam)  # identity eigenbasis, so components stay unrotated
        data = sample_subgaussian_rotated(model, 20_000, seed=4, component_law="uniform")
        half = np.sqrt(3.0 * lam)
        assert np.all(np.abs(data.rows) <= half + 1e-12)
        assert np.abs(data.rows).max(axis=0) == pytest.approx(half, rel=0.01)

    def test_rotated_subgaussian_covariance_converges(self):
        model = build_explicit([2.0, 1.0, 0.5], rotation_seed=9)
        data = sample_subgaussian_rotated(model, 100_000, seed=5, component_law="rademacher")
        centered = data.rows - data.rows.mean(axis=0)
        cov = centered.T @ centered / data.n
        assert np.abs(cov - model.sigma.entries).max() < 0.02

    def test_rate_improves_with_n(self):
        model = build_explicit((np.arange(1, 13.0)) ** -2.0)
        errs, mean_errs = [], []
        for n in (2_000, 32_000):
            data = sample_gaussian(model, n, seed=6)
            centered = data.rows - data.rows.mean(axis=0)
            cov = centered.T @ centered / n
            errs.append(np.abs(cov - model.sigma.entries).max())
            mean_errs.append(float(np.linalg.norm(data.rows.mean(axis=0))))
        # root-n rate: a 16x larger sample should shrink both errors ~4x
        assert errs[1] < errs[0] / 2.0
        assert mean_errs[1] < mean_errs[0] / 2.0

    def test_needs_two_observations(self):
        model = identity_model(3)
        with pytest.raises(ValueError):
            sample_gaussian(model, 1, seed=0)
        with pytest.raises(ValueError):
            sample_subgaussian_rotated(model, 1, seed=0)


def test_random_orthonormal_is_deterministic_and_orthonormal():
    q1 = random_orthonormal(12, 5, seed=7)
    q2 = random_orthonormal(12, 5, seed=7)
    assert np.array_equal(q1, q2)
    assert np.abs(q1.T @ q1 - np.eye(5)).max() < 1e-12
    assert not np.array_equal(q1, random_orthonormal(12, 5, seed=8))


def test_explicit_spectrum_sorted_and_matched():
    model = build_explicit([1.0, 3.0, 2.0], rotation_seed=2)
    np.testing.assert_allclose(model.true_spectrum, [3.0, 2.0, 1.0])
    assert model_spectrum_matches(model)
