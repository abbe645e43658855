"""Acceptance criteria, one PASS/FAIL line each.

Monte Carlo criteria use fixed seeds so the printed numbers are stable.
"""

import numpy as np
import pytest

from conftest import masked_data
from hiermiss.bivariate import (
    BivariateConfig,
    BivariateMeans,
    change_score,
    mean_vector,
    subsample_summary,
)
from hiermiss.estimator import KnownCovariance, hierarchical_estimate
from hiermiss.km import CensoredSample, product_limit, recursive_cdf
from hiermiss.params import ParameterDef
from hiermiss.patterns import Dataset
from hiermiss.simulation import (
    MCAR,
    DeltaShift,
    Population,
    StudySpec,
    Tolerances,
    convergence_probe,
    run_study,
)
from test_properties import CHECKS

MEANS2 = [ParameterDef.mean(0), ParameterDef.mean(1)]
CONTRAST = np.array([1.0, -1.0])


def random_censored(rng):
    while True:
        n = int(rng.integers(1, 41))
        t = rng.uniform(0.01, 1.0, size=n)
        c = rng.uniform(0.01, 1.0, size=n)
        event = t <= c
        if event.any():
            return CensoredSample(np.minimum(t, c), event)


def test_ac1_km_equivalence(criterion):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        s = random_censored(rng)
        a, b = recursive_cdf(s), product_limit(s)
        assert np.array_equal(a.knots, b.knots)
        worst = max(worst, float(np.max(np.abs(a.values - b.values))))
    ok = worst <= 1e-12
    criterion("AC1 KM equivalence", ok, f"1000 samples, max |recursive - product limit| = {worst:.3e} (tol 1e-12)")
    assert ok


def random_config(rng):
    sd = rng.uniform(0.2, 3.0, size=2)
    rho = rng.uniform(-0.95, 0.95)
    sigma = np.array([[sd[0] ** 2, rho * sd[0] * sd[1]], [rho * sd[0] * sd[1], sd[1] ** 2]])
    return sigma, [int(v) for v in rng.integers(2, 201, size=3)]


def test_ac2_closed_form_engine_equivalence(criterion):
    rng = np.random.default_rng(2)
    worst_mu = worst_cov = worst_delta = worst_var = 0.0
    for _ in range(500):
        sigma, (J11, J21, J22) = random_config(rng)
        mean = rng.normal(size=2) * 2
        x = masked_data(rng, {(1, 1): J11, (1, 0): J21, (0, 1): J22}, sigma, mean)
        res = hierarchical_estimate(Dataset(x), MEANS2, KnownCovariance(sigma))
        means, sizes = subsample_summary(x)
        cfg = BivariateConfig(sigma[0, 0], sigma[1, 1], sigma[0, 1], *sizes)
        mu, cov = mean_vector(means, cfg)
        worst_mu = max(worst_mu, np.abs(res.theta - mu).max())
        worst_cov = max(worst_cov, np.abs(res.cov - cov).max())

        x2 = x[: J11 + J21]
        res2 = hierarchical_estimate(Dataset(x2), MEANS2, KnownCovariance(sigma))
        means2, sizes2 = subsample_summary(x2)
        d, v = change_score(means2, BivariateConfig(sigma[0, 0], sigma[1, 1], sigma[0, 1], *sizes2))
        est, var = res2.contrast(CONTRAST)
        worst_delta = max(worst_delta, abs(est - d))
        worst_var = max(worst_var, abs(var - v))
    worst = max(worst_mu, worst_cov, worst_delta, worst_var)
    ok = worst <= 1e-10
    criterion(
        "AC2 closed form vs engine",
        ok,
        f"500 configs, max abs diff mean {worst_mu:.2e}, cov {worst_cov:.2e}, "
        f"change score {worst_delta:.2e}, its variance {worst_var:.2e} (tol 1e-10)",
    )
    assert ok


def test_ac3_special_case_collapses(criterion):
    rng = np.random.default_rng(3)
    eps = np.finfo(float).eps
    worst_cc = worst_ac = 0.0
    for _ in range(1000):
        m = BivariateMeans(*rng.normal(size=3) * 5)
        J11, J21 = (int(v) for v in rng.integers(1, 201, size=2))
        s11 = rng.uniform(0.1, 5)
        s22 = s11 + rng.uniform(0.1, 5)
        d, _ = change_score(m, BivariateConfig(s11, s22, s11, J11, J21))
        worst_cc = max(worst_cc, abs(d - (m.x111 - m.x112)))
        d, _ = change_score(m, BivariateConfig(s11, s22, 0.0, J11, J21))
        avail = (J11 * m.x111 + J21 * m.x211) / (J11 + J21) - m.x112
        scale = max(abs(m.x111), abs(m.x211), abs(m.x112))
        worst_ac = max(worst_ac, abs(d - avail) / (eps * scale))
    ok = worst_cc == 0.0 and worst_ac <= 8
    criterion(
        "AC3 special-case collapses",
        ok,
        f"1000 cases, complete-case max diff {worst_cc:.1e} (exact), "
        f"available-case max diff {worst_ac:.1f} ulp of the data scale (tol 8)",
    )
    assert ok


BIV_POP = Population((0.0, 0.0), ((1.0, 0.5), (0.5, 1.0)))


@pytest.mark.slow
def test_ac4_change_score_variance(criterion):
    spec = StudySpec(
        BIV_POP,
        MCAR({"11": 0.5, "10": 0.5}),
        200,
        200_000,
        ("change_score", "change_score_complete"),
        seed=4,
    )
    rep = run_study(spec)
    cs = rep.estimators["change_score"]
    cc = rep.estimators["change_score_complete"]
    rel = float(cs.variance_rel_error[0])
    z = float(cs.bias_z[0])
    var_ok = abs(rel) <= 0.02
    bias_ok = z <= 4.0
    order_ok = cs.variance[0] <= cc.variance[0]
    ok = var_ok and bias_ok and order_ok and cs.n_failed == 0
    criterion(
        "AC4 change-score variance",
        ok,
        f"R=2e5: Var {cs.variance[0]:.6f} vs formula {cs.theory_variance[0]:.6f} "
        f"(rel {rel:+.4f}, tol 0.02); |bias|/SE {z:.2f} (tol 4); "
        f"Var {cs.variance[0]:.6f} <= complete-case {cc.variance[0]:.6f}",
    )
    assert ok


@pytest.mark.slow
def test_ac5_nonignorable_shift(criterion):
    third = 1 / 3
    spec = StudySpec(
        BIV_POP,
        DeltaShift({"11": third, "10": third, "01": third}, 5.0),
        300,
        100_000,
        ("shift_adjusted", "available_case", "change_score_complete", "incomplete_pairs"),
        seed=5,
        tolerances=Tolerances(mean_se=4.0, variance_rel=0.03),
        expect_biased=("available_case",),
    )
    rep = run_study(spec)
    sa = rep.estimators["shift_adjusted"]
    ac = rep.estimators["available_case"]
    cc = rep.estimators["change_score_complete"]
    ip = rep.estimators["incomplete_pairs"]
    rel = float(sa.variance_rel_error[0])
    checks = [
        sa.bias_z[0] <= 4.0,
        ac.bias_z[0] > 10.0,
        abs(rel) <= 0.03,
        sa.variance[0] < cc.variance[0],
        sa.variance[0] < ip.variance[0],
        sa.n_failed == 0,
    ]
    ok = all(checks)
    criterion(
        "AC5 non-ignorable shift",
        ok,
        f"R=1e5: shift-adjusted |bias|/SE {sa.bias_z[0]:.2f} (tol 4); available-case "
        f"component 1 |bias|/SE {ac.bias_z[0]:.1f} (need > 10); Var {sa.variance[0]:.6f} vs "
        f"formula {sa.theory_variance[0]:.6f} (rel {rel:+.4f}, tol 0.03); below complete pairs "
        f"{cc.variance[0]:.6f} and incomplete pairs {ip.variance[0]:.6f}",
    )
    assert ok


@pytest.mark.slow
def test_ac6_plugin_convergence(criterion):
    spec = StudySpec(
        BIV_POP,
        MCAR({"11": 0.5, "10": 0.25, "01": 0.25}),
        50,
        20_000,
        ("hierarchical_plugin",),
        seed=6,
    )
    rows = convergence_probe(spec, [50, 200, 800])
    ratios = [r.variance_ratio for r in rows]
    errs = [r.gain_error for r in rows]
    ok = (
        ratios[0] > ratios[1] > ratios[2]
        and ratios[2] <= 1.05
        and errs[0] > errs[1] > errs[2]
    )
    table = ", ".join(f"N={r.n}: ratio {r.variance_ratio:.4f}, gain err {r.gain_error:.4f}" for r in rows)
    criterion("AC6 plug-in convergence", ok, f"R=2e4 each; {table}")
    assert ok


def test_ac7_property_suites(criterion):
    counts = {}
    for name, check in CHECKS.items():
        failed = 0
        for seed in range(1000):
            try:
                check(seed)
            except AssertionError:
                failed += 1
        counts[name] = failed
    ok = not any(counts.values())
    detail = "; ".join(f"{k} {1000 - v}/1000" for k, v in counts.items())
    criterion("AC7 property suites", ok, detail)
    assert ok
