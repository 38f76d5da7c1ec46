"""Latin hypercube sampling and partial rank correlation."""

import numpy as np
import pytest
from scipy import stats

from rabictl.errors import ConfigError, DegenerateInputError, StudyError
from rabictl.integrate import TimeGrid
from rabictl.model import StateVec
from rabictl.params import PARAM_NAMES
from rabictl.sensitivity import (
    ParamRange,
    lhs_sample,
    normal_ranges,
    prcc,
    prcc_study,
    uniform_ranges,
    write_prcc_study,
)


def rank_partial_corr_oracle(X, Z):
    """Independent route: partial correlation from the precision matrix of ranks."""
    cols = [stats.rankdata(X[:, i]) for i in range(X.shape[1])] + [stats.rankdata(Z)]
    Om = np.linalg.inv(np.corrcoef(np.column_stack(cols), rowvar=False))
    zi = X.shape[1]
    return np.array([-Om[i, zi] / np.sqrt(Om[i, i] * Om[zi, zi]) for i in range(zi)])


# --- ranges and sampling ----------------------------------------------------------


def test_param_range_validation():
    with pytest.raises(ConfigError):
        ParamRange("theta1", "uniform", 2.0, 1.0)
    with pytest.raises(ConfigError):
        ParamRange("theta1", "normal", 1.0, 0.0)
    with pytest.raises(ConfigError):
        ParamRange("not_a_param", "uniform", 0.0, 1.0)
    with pytest.raises(ConfigError):
        ParamRange("theta1", "weibull", 0.0, 1.0)


def test_uniform_ranges_cover_all_parameters(p_est):
    ranges = uniform_ranges(p_est, 0.25)
    assert tuple(r.name for r in ranges) == PARAM_NAMES
    for r in ranges:
        base = getattr(p_est, r.name)
        assert r.a == pytest.approx(0.75 * base) and r.b == pytest.approx(1.25 * base)


def test_lhs_stratification_exact():
    ranges = [ParamRange("theta1", "uniform", 0.0, 1.0), ParamRange("tau1", "uniform", 2.0, 6.0)]
    for N in (4, 17, 100):
        X = lhs_sample(ranges, N, seed=5)
        u0 = np.sort(X[:, 0])
        assert np.array_equal(np.floor(u0 * N), np.arange(N))  # one sample per stratum
        u1 = np.sort((X[:, 1] - 2.0) / 4.0)
        assert np.array_equal(np.floor(u1 * N), np.arange(N))


def test_lhs_deterministic_given_seed():
    ranges = [ParamRange("theta1", "uniform", 0.0, 1.0)]
    assert np.array_equal(lhs_sample(ranges, 50, 11), lhs_sample(ranges, 50, 11))
    assert not np.array_equal(lhs_sample(ranges, 50, 11), lhs_sample(ranges, 50, 12))


def test_lhs_uniform_mean_oracle():
    a, b, N = 3.0, 9.0, 1000
    X = lhs_sample([ParamRange("theta1", "uniform", a, b)], N, seed=13)
    se = (b - a) / np.sqrt(12 * N)  # iid standard error; LHS is tighter
    assert abs(X[:, 0].mean() - (a + b) / 2) < 3 * se


def test_lhs_normal_truncated_positive():
    # sd comparable to mean: untruncated draws would cross zero
    X = lhs_sample([ParamRange("nu1", "normal", 0.001, 0.002)], 500, seed=3)
    assert np.all(X > 0.0)


def test_normal_preset_ranges():
    ranges = normal_ranges(["theta1", "C"])
    assert ranges[0].kind == "normal" and ranges[0].a == pytest.approx(1996.691056)


def test_lhs_validation():
    with pytest.raises(ConfigError):
        lhs_sample([ParamRange("theta1", "uniform", 0, 1)], 1, 0)
    with pytest.raises(ConfigError):
        lhs_sample([], 10, 0)


# --- prcc -------------------------------------------------------------------------


def test_prcc_null_case():
    rng = np.random.default_rng(21)
    X = rng.random((1000, 4))
    Z = rng.random(1000)
    assert np.all(np.abs(prcc(X, Z)) < 0.1)


def test_prcc_perfect_monotone_dependence():
    rng = np.random.default_rng(22)
    X = rng.random((1000, 3))
    Z = np.exp(3 * X[:, 0])
    r = prcc(X, Z)
    assert r[0] > 0.99
    assert np.all(np.abs(r[1:]) < 0.1)


def test_prcc_against_precision_matrix_oracle():
    rng = np.random.default_rng(23)
    X = rng.random((50, 3))
    Z = 1.3 * X[:, 0] - 0.7 * X[:, 1] + 0.1 * rng.random(50)
    assert np.max(np.abs(prcc(X, Z) - rank_partial_corr_oracle(X, Z))) < 1e-10


def test_prcc_invariant_under_monotone_transform():
    rng = np.random.default_rng(24)
    X = rng.random((200, 4))
    Z = X[:, 1] + 0.5 * rng.random(200)
    base = prcc(X, Z)
    cubed = prcc(X**3, Z**3)
    assert np.max(np.abs(base - cubed)) < 1e-12


def test_prcc_invariant_under_row_shuffle():
    rng = np.random.default_rng(25)
    X = rng.random((150, 3))
    Z = X[:, 0] ** 2 + rng.random(150)
    perm = rng.permutation(150)
    assert np.max(np.abs(prcc(X, Z) - prcc(X[perm], Z[perm]))) < 1e-12


def test_prcc_error_cases():
    rng = np.random.default_rng(26)
    X = rng.random((10, 8))
    with pytest.raises(ConfigError, match="N > P"):
        prcc(X, rng.random(10))
    X2 = rng.random((50, 3))
    X2[:, 1] = 4.2
    with pytest.raises(DegenerateInputError, match="constant"):
        prcc(X2, rng.random(50))
    X3 = rng.random((50, 3))
    X3[:, 2] = X3[:, 0]
    with pytest.raises(DegenerateInputError, match="collinear"):
        prcc(X3, rng.random(50))


def test_prcc_magnitudes_bounded():
    rng = np.random.default_rng(27)
    X = rng.random((120, 5))
    Z = X @ rng.random(5) + 0.01 * rng.random(120)
    assert np.all(np.abs(prcc(X, Z)) <= 1.0 + 1e-12)


# --- study ------------------------------------------------------------------------


def light_seed_state(p):
    return StateVec(
        S_H=p.theta1 / p.mu1, E_H=0, I_H=0, R_H=0,
        S_F=p.theta2 / p.mu2, E_F=5.0, I_F=10.0,
        S_D=p.theta3 / p.mu3, E_D=5.0, I_D=10.0, R_D=0, M=0.1,
    )


def test_prcc_study_shapes_and_determinism(p_base):
    ranges = uniform_ranges(p_base, 0.25, names=["tau1", "kappa1", "beta2", "nu1", "rho1"])
    grid = TimeGrid(0.0, 5.0, 100)
    kwargs = dict(
        ranges=ranges, N=40, seed=17, p_base=p_base, y0=light_seed_state(p_base),
        grid=grid, sample_times=[2.0, 5.0], outputs=("I_H", "M"),
    )
    res1 = prcc_study(**kwargs)
    res2 = prcc_study(**kwargs)
    assert [r.output for r in res1] == ["I_H", "M"]
    for r1, r2 in zip(res1, res2):
        assert r1.times == (2.0, 5.0)
        assert r1.coefficients.shape == (2, 5)
        assert np.array_equal(r1.coefficients, r2.coefficients)
        assert np.all(np.abs(r1.coefficients) <= 1.0)
        assert r1.dropped_rows == 0


def test_prcc_study_drops_blowup_rows(p_base):
    # absurd transmission on a coarse grid: every row fails -> study error
    ranges = [ParamRange("kappa1", "uniform", 20.0, 60.0)]
    grid = TimeGrid(0.0, 50.0, 10)
    with pytest.raises(StudyError, match="failed to simulate"):
        prcc_study(ranges, 10, 1, p_base, light_seed_state(p_base), grid,
                   sample_times=[50.0], outputs=("I_H",))


def test_prcc_study_rejects_unknown_output(p_base):
    with pytest.raises(ConfigError, match="unknown output"):
        prcc_study(uniform_ranges(p_base, 0.25, names=["tau1"]), 10, 1, p_base,
                   light_seed_state(p_base), TimeGrid(0, 1, 10), [1.0], outputs=("X_H",))


def test_prcc_csv_long_format(tmp_path, p_base):
    ranges = uniform_ranges(p_base, 0.25, names=["tau1", "kappa1", "beta2", "nu1"])
    grid = TimeGrid(0.0, 3.0, 60)
    res = prcc_study(ranges, 20, 17, p_base, light_seed_state(p_base), grid,
                     sample_times=[1.5, 3.0], outputs=("I_H", "M"))
    written = write_prcc_study(res, tmp_path)
    assert [p.name for p in written] == ["prcc_I_H.csv", "prcc_M.csv"]
    lines = written[0].read_text().splitlines()
    assert lines[0] == "time,param,prcc"
    assert len(lines) == 1 + 2 * 4
    assert (tmp_path / "prcc.meta.json").exists()
