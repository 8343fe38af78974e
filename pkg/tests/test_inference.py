import math

import numpy as np
import pytest

from panel_logit import (NonpositiveAlpha, NonpositivePhiHat,
                         SingularRestrictionCovariance, TimeTrendSpec,
                         TransformedEstimate, ZeroDenominator, aggregate,
                         alpha_from_spec, alpha_labels, chi2_sf,
                         corrected_ratio_variance, estimate_panel,
                         recover_original, simulate_panel, two_step_dtd_tm1,
                         two_step_ratio, wald_test)
from panel_logit import DgpConfig, TimeDummiesSpec
from panel_logit.aggregation import from_expected_bars
from panel_logit.estimators import (VARIANT_FULL, VARIANT_MINUS_15,
                                    VARIANT_MINUS_37, variant_minus_r)
from panel_logit.inference import RESTRICTION_SETS
from panel_logit.oracle import population_aggregates, population_estimate, spec_with_steps

ETA = ((-1.0, 0.0, 1.0), (1 / 3, 1 / 3, 1 / 3))


def _estimate(family, labels, alpha, vcov=None, variant=VARIANT_MINUS_37, n=100):
    alpha = np.asarray(alpha, dtype=float)
    if vcov is None:
        vcov = np.zeros((len(alpha), len(alpha)))
    return TransformedEstimate(family=family, variant=variant, window_t=5, n=n,
                               col_labels=tuple(labels), alpha=alpha,
                               vcov=np.asarray(vcov, dtype=float))


LABELS6 = ("a", "b", "c", "d", "f", "g")


def test_recover_identity_point():
    est = _estimate("A", LABELS6, np.ones(6))
    orig = recover_original(est)
    assert orig.gamma.value == 0.0
    assert orig.dtd_t.value == 0.0
    assert orig.dtd_tp1.value == 0.0


def test_recover_exact_logs():
    alpha = np.ones(6)
    alpha[0] = math.exp(0.4)   # component a
    alpha[3] = math.exp(1.4)   # component d
    est = _estimate("A", LABELS6, alpha)
    orig = recover_original(est)
    assert orig.gamma.value == pytest.approx(1.0, abs=1e-12)
    assert orig.dtd_t.value == pytest.approx(0.4, abs=1e-12)
    assert orig.gamma_from == "d"


def test_recover_uses_e_when_d_absent():
    labels = ("a", "b", "c", "e", "f", "g")
    alpha = np.ones(6)
    alpha[0] = math.exp(0.4)
    alpha[3] = math.exp(0.4 - 1.0)  # e = a * exp(-gamma)
    est = _estimate("A", labels, alpha, variant=VARIANT_MINUS_15)
    orig = recover_original(est)
    assert orig.gamma.value == pytest.approx(1.0, abs=1e-12)
    assert orig.gamma_from == "e"


def test_recover_b_signs():
    spec = spec_with_steps(0.8, 0.3, -0.2)
    est = population_estimate("B", spec, 5, VARIANT_MINUS_15)
    orig = recover_original(est)
    assert orig.gamma.value == pytest.approx(0.8, abs=1e-9)
    assert orig.dtd_t.value == pytest.approx(0.3, abs=1e-9)
    assert orig.dtd_tp1.value == pytest.approx(-0.2, abs=1e-9)


def test_recover_roundtrip_all_families_variants():
    spec = spec_with_steps(-0.6, 0.45, 0.2)
    for family in ("A", "B"):
        for variant in [variant_minus_r(r) for r in (1, 4, 8)] + [VARIANT_MINUS_37, VARIANT_MINUS_15]:
            est = population_estimate(family, spec, 5, variant)
            orig = recover_original(est)
            assert orig.gamma.value == pytest.approx(-0.6, abs=1e-8)
            assert orig.dtd_t.value == pytest.approx(0.45, abs=1e-8)
            assert orig.dtd_tp1.value == pytest.approx(0.2, abs=1e-8)
    trend = TimeTrendSpec(gamma=-0.6, phi_coef=0.25)
    est = population_estimate("C", trend, 5, VARIANT_FULL)
    orig = recover_original(est)
    assert orig.gamma.value == pytest.approx(-0.6, abs=1e-8)
    assert orig.phi_coef.value == pytest.approx(0.25, abs=1e-8)


def test_ab_agree_on_population():
    spec = spec_with_steps(1.0, 0.2, -0.1)
    est_a = population_estimate("A", spec, 5, VARIANT_MINUS_37)
    est_b = population_estimate("B", spec, 5, VARIANT_MINUS_15)
    ga = recover_original(est_a).gamma.value
    gb = recover_original(est_b).gamma.value
    assert abs(ga - gb) <= 1e-8


def test_nonpositive_alpha_surfaces():
    alpha = np.ones(6)
    alpha[1] = -0.2
    est = _estimate("A", LABELS6, alpha)
    with pytest.raises(NonpositiveAlpha):
        recover_original(est)


def test_delta_method_matches_finite_differences():
    rng = np.random.default_rng(8)
    alpha = np.exp(rng.uniform(-0.5, 0.5, size=6))
    m = rng.normal(size=(6, 6))
    vcov = m @ m.T / 50.0
    est = _estimate("A", LABELS6, alpha, vcov=vcov)
    orig = recover_original(est)

    def transform(a):
        return np.array([math.log(a[3]) - math.log(a[0]),   # gamma
                         math.log(a[0]),                    # dtd_t
                         -math.log(a[1])])                  # dtd_tp1
    h = 1e-6
    jac = np.empty((3, 6))
    for k in range(6):
        up, dn = alpha.copy(), alpha.copy()
        up[k] += h
        dn[k] -= h
        jac[:, k] = (transform(up) - transform(dn)) / (2 * h)
    expected = jac @ vcov @ jac.T
    assert orig.gamma.se**2 == pytest.approx(expected[0, 0], rel=1e-6)
    assert orig.dtd_t.se**2 == pytest.approx(expected[1, 1], rel=1e-6)
    assert orig.dtd_tp1.se**2 == pytest.approx(expected[2, 2], rel=1e-6)


def test_delta_variances_nonnegative_for_psd_input():
    rng = np.random.default_rng(12)
    for _ in range(25):
        alpha = np.exp(rng.uniform(-1, 1, size=6))
        m = rng.normal(size=(6, 3))
        est = _estimate("A", LABELS6, alpha, vcov=m @ m.T)
        orig = recover_original(est)
        for p in (orig.gamma, orig.dtd_t, orig.dtd_tp1):
            assert p.se >= 0.0


# ---------------------------------------------------------------------------
# two-step


def test_two_step_population_value():
    spec = TimeDummiesSpec(gamma=1.0, td=(0.1, -0.1, 0.3, -0.3, -0.1, 0.3, 0.5, 0.2))
    t = 7
    stats_tm1 = population_aggregates(spec, t - 1, *ETA)
    a = alpha_from_spec("A", spec, t)
    labels = alpha_labels("A")
    ratio = two_step_ratio("A", stats_tm1, a[labels.index("a")], a[labels.index("d")])
    assert ratio == pytest.approx(math.exp(0.4), abs=1e-8)

    b = alpha_from_spec("B", spec, t)
    ratio_b = two_step_ratio("B", stats_tm1, b[labels.index("a")], b[labels.index("d")])
    assert ratio_b == pytest.approx(math.exp(-0.4), abs=1e-8)


def test_corrected_variance_reduces_without_covariances():
    jac = np.array([0.7, -0.3])
    assert corrected_ratio_variance(0.9, np.zeros(2), np.zeros((2, 2)), jac) == 0.9
    # and the correction moves it when covariances are present
    cov = np.array([[0.2, 0.05], [0.05, 0.1]])
    out = corrected_ratio_variance(0.9, np.array([0.01, -0.02]), cov, jac)
    assert out != 0.9


def test_two_step_zero_denominator():
    stats = from_expected_bars(4, np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(ZeroDenominator):
        two_step_ratio("A", stats, 1.0, 1.0)


def test_two_step_nonpositive_ratio():
    theta_bar = np.zeros((4, 4))
    theta_bar[0, 0] = 0.2   # kernel 1, '-' selector
    theta_bar[2, 0] = 0.1   # kernel 3 positive denominator -> ratio negative
    stats = from_expected_bars(4, theta_bar, np.zeros((4, 4)))
    est = _estimate("A", LABELS6, np.ones(6), n=0)
    with pytest.raises(NonpositivePhiHat):
        # ratio = -(a*0.2)/(a^2*0.1) < 0; the variance machinery is never reached
        two_step_dtd_tm1(est, _dummy_system(est), _dummy_stats(5), stats)


def _dummy_system(est):
    from panel_logit.estimators import LinearSystem

    m = len(est.col_labels)
    return LinearSystem(family=est.family, variant=est.variant, window_t=5,
                        n=est.n, y_vec=np.zeros(m), x_mat=np.eye(m),
                        row_ids=tuple(range(1, m + 1)), col_labels=est.col_labels,
                        guards={})


def _dummy_stats(window_t):
    return from_expected_bars(window_t, np.zeros((4, 4)), np.zeros((4, 4)))


def test_two_step_rejects_variant_without_d():
    est = _estimate("A", ("a", "b", "c", "e", "f", "g"), np.ones(6),
                    variant=VARIANT_MINUS_15)
    with pytest.raises(ValueError, match="drops component 'd'"):
        two_step_dtd_tm1(est, _dummy_system(est), _dummy_stats(5), _dummy_stats(4))


def test_two_step_end_to_end_matches_manual_ratio():
    # on a clean homogeneous sample the full two-step matches the point ratio
    spec = TimeDummiesSpec(gamma=0.8, td=(0.0, 0.1, -0.05, 0.2, 0.05, 0.15, 0.3, 0.1))
    panel = simulate_panel(spec, DgpConfig(n_individuals=120_000, n_periods=8,
                                           sigma_eta_sq=1.5, seed=2))
    res = estimate_panel(panel, "A", "minus-3-7", 6, two_step=True)
    stats_tm1 = aggregate(panel, 5)
    ratio = two_step_ratio("A", stats_tm1, res.transformed.value("a"),
                           res.transformed.value("d"))
    assert res.two_step.ratio == pytest.approx(ratio, rel=1e-12)
    assert res.original.dtd_tm1.value == pytest.approx(math.log(ratio), rel=1e-12)
    assert res.two_step.var_ratio_corrected != res.two_step.var_ratio
    assert res.original.dtd_tm1.se > 0.0


# ---------------------------------------------------------------------------
# Wald


def test_restrictions_annihilate_true_logs():
    rng = np.random.default_rng(5)
    for _ in range(20):
        gamma, s_t, s_tp1 = rng.uniform(-1, 1, 3)
        spec = spec_with_steps(gamma, s_t, s_tp1)
        labels6, rows = RESTRICTION_SETS["ab-dummies"]
        for family in ("A", "B"):
            full = alpha_from_spec(family, spec, 5)
            lab = alpha_labels(family)
            ell = np.log([full[lab.index(c)] for c in labels6])
            assert np.allclose(rows @ ell, 0.0, atol=1e-12)

        trend = TimeTrendSpec(gamma=gamma, phi_coef=s_t)
        labels8, rows_c = RESTRICTION_SETS["c-trend"]
        ell_c = np.log(alpha_from_spec("C", trend, 5))
        assert np.allclose(rows_c @ ell_c, 0.0, atol=1e-12)

        labels6t, rows_t = RESTRICTION_SETS["ab-trend"]
        for family in ("A", "B"):
            full = alpha_from_spec(family, trend, 5)
            lab = alpha_labels(family)
            ell = np.log([full[lab.index(c)] for c in labels6t])
            assert np.allclose(rows_t @ ell, 0.0, atol=1e-12)


def test_wald_zero_at_truth():
    spec = spec_with_steps(0.9, 0.3, -0.15)
    full = alpha_from_spec("A", spec, 5)
    lab = alpha_labels("A")
    alpha = [full[lab.index(c)] for c in LABELS6]
    rng = np.random.default_rng(2)
    m = rng.normal(size=(6, 6))
    est = _estimate("A", LABELS6, alpha, vcov=m @ m.T / 100)
    result = wald_test(est, "ab-dummies")
    assert result.statistic == pytest.approx(0.0, abs=1e-18)
    assert result.p_value == 1.0
    assert result.df == 3


def test_wald_row_order_invariance():
    rng = np.random.default_rng(9)
    alpha = np.exp(rng.uniform(-0.3, 0.3, 6))
    m = rng.normal(size=(6, 6))
    est = _estimate("A", LABELS6, alpha, vcov=m @ m.T / 100)
    base = wald_test(est, "ab-dummies").statistic

    labels, rows = RESTRICTION_SETS["ab-dummies"]
    try:
        RESTRICTION_SETS["ab-dummies"] = (labels, rows[::-1].copy())
        permuted = wald_test(est, "ab-dummies").statistic
    finally:
        RESTRICTION_SETS["ab-dummies"] = (labels, rows)
    assert permuted == pytest.approx(base, rel=1e-10)


def test_wald_errors():
    est = _estimate("A", LABELS6, np.ones(6))
    with pytest.raises(SingularRestrictionCovariance):
        wald_test(est, "ab-dummies")  # zero covariance
    with pytest.raises(ValueError, match="unknown restriction set"):
        wald_test(est, "nope")
    est7 = _estimate("A", ("a", "b", "c", "d", "e", "f", "g"), np.ones(7),
                     variant=variant_minus_r(1))
    with pytest.raises(ValueError, match="expects components"):
        wald_test(est7, "ab-dummies")
    bad = _estimate("A", LABELS6, np.array([1, -1, 1, 1, 1, 1.0]),
                    vcov=np.eye(6))
    with pytest.raises(NonpositiveAlpha):
        wald_test(bad, "ab-dummies")


def test_chi2_sf_against_scipy_distribution():
    from scipy.stats import chi2

    for df in (1, 3, 6):
        for x in (0.0, 0.5, 2.0, 7.81, 12.59, 40.0):
            assert chi2_sf(x, df) == pytest.approx(chi2.sf(x, df), rel=1e-12, abs=1e-300)
    assert chi2_sf(-1.0, 3) == 1.0
