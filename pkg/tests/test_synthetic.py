import numpy as np
import pytest

from pdro_itr.errors import InputError, ParameterError
from pdro_itr.rng import STREAM_COVARIATES, stream_rng
from pdro_itr.simplex import SimplexVector
from pdro_itr.synthetic import (
    Dataset,
    dirichlet_draws,
    gen_source,
    gen_source_natural,
    gen_target,
    outcome_mean,
    read_dataset_csv,
    sample_dirichlet,
    scenario_f,
    scenario_spec,
    target_mixture_score,
    true_membership,
    true_membership_probs,
    true_target_cate,
    truncated_standard_normal,
    write_dataset_csv,
)


def test_scenario_dims():
    assert [scenario_spec(i).dim_p for i in (1, 2, 3, 4)] == [5, 5, 30, 30]


def test_scenario_f_values():
    s1 = scenario_spec(1)
    assert scenario_f(s1, 1, [1, 0, 0, 0, 0]) == 3.0
    s2 = scenario_spec(2)
    assert scenario_f(s2, 3, np.zeros(5)) == 0.0
    s4 = scenario_spec(4)
    x = np.zeros(30)
    x[0], x[1] = 1.0, -1.0
    assert scenario_f(s4, 2, x) == 0.0


def test_scenario_f_bad_source():
    with pytest.raises(ParameterError):
        scenario_f(scenario_spec(1), 4, np.zeros(5))


def test_membership_uniform_at_origin():
    w = true_membership(scenario_spec(1), np.zeros(5))
    assert np.allclose(w.weights, 1.0 / 3.0)


def test_membership_simplex_everywhere():
    spec = scenario_spec(1)
    X = stream_rng(1, STREAM_COVARIATES).standard_normal((200, 5))
    probs = true_membership_probs(spec, X)
    assert np.all(probs > 0)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_membership_softmax_at_e1():
    # logits (-3, 1, 1): softmax = (e^-3, e, e) / (e^-3 + 2e)
    w = true_membership(scenario_spec(1), np.array([1.0, 0, 0, 0, 0]))
    denom = np.exp(-3) + 2 * np.e
    expected = np.array([np.exp(-3), np.e, np.e]) / denom
    assert np.allclose(w.weights, expected, atol=1e-12)
    assert w.weights[0] == pytest.approx(0.00907, abs=5e-6)


def test_gen_source_reproducible_and_quota():
    spec = scenario_spec(1)
    a = gen_source(spec, 50, seed=11)
    b = gen_source(spec, 50, seed=11)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y) and np.array_equal(a.a, b.a)
    assert np.bincount(a.s, minlength=4)[1:].tolist() == [50, 50, 50]
    c = gen_source(spec, 50, seed=12)
    assert not np.array_equal(a.X, c.X)


def test_gen_source_treatment_rate():
    ds = gen_source(scenario_spec(1), 3334, seed=2)
    assert abs(ds.a.mean() - 0.5) < 0.03


def test_outcome_model_exact_when_forced():
    # With a=1 and no noise the outcome is f_s(x) exactly.
    spec = scenario_spec(2)
    X = stream_rng(3, STREAM_COVARIATES).standard_normal((20, 5))
    assert np.array_equal(outcome_mean(spec, 1, X, np.ones(20)), scenario_f(spec, 1, X))
    assert np.array_equal(outcome_mean(spec, 1, X, np.zeros(20)), -scenario_f(spec, 1, X))


def test_gen_source_outcome_wiring():
    spec = scenario_spec(1)
    ds = gen_source(spec, 400, seed=5)
    resid = np.empty(ds.n)
    for s in (1, 2, 3):
        idx = ds.s == s
        resid[idx] = ds.y[idx] - outcome_mean(spec, s, ds.X[idx], ds.a[idx])
    # Residuals are the N(0,1) noise draws.
    assert abs(resid.mean()) < 0.1
    assert abs(resid.std() - 1.0) < 0.1


def test_natural_class_proportions_match_mean_membership():
    spec = scenario_spec(1)
    ds = gen_source_natural(spec, 20000, seed=4)
    props = np.bincount(ds.s, minlength=4)[1:] / ds.n
    # Monte Carlo oracle for E[w_s(X)] under the unconditional covariate law.
    Xmc = truncated_standard_normal(stream_rng(900, STREAM_COVARIATES), (1_000_000, 5))
    target = true_membership_probs(spec, Xmc).mean(axis=0)
    assert np.max(np.abs(props - target)) < 0.02


def test_source_conditional_frequencies_by_decile():
    spec = scenario_spec(1)
    ds = gen_source_natural(spec, 50000, seed=8)
    w1 = true_membership_probs(spec, ds.X)[:, 0]
    edges = np.quantile(w1, np.linspace(0, 1, 11))
    bins = np.clip(np.searchsorted(edges[1:-1], w1, side="right"), 0, 9)
    for b in range(10):
        idx = bins == b
        if idx.sum() < 100:
            continue
        assert abs((ds.s[idx] == 1).mean() - w1[idx].mean()) < 0.03


def test_gen_target_collapses_to_single_source():
    spec = scenario_spec(1)
    rho = SimplexVector(np.array([1.0, 0.0, 0.0]))
    X = stream_rng(21, STREAM_COVARIATES).standard_normal((50, 5))
    g = target_mixture_score(spec, X, 0.0, rho)
    assert np.allclose(g, scenario_f(spec, 1, X))


def test_gen_target_zero_at_origin():
    spec = scenario_spec(1)
    rho = SimplexVector.uniform(3)
    g = target_mixture_score(spec, np.zeros((1, 5)), 0.3, rho)
    assert g[0] == 0.0


def test_gen_target_mean_outcome_near_zero():
    ds = gen_target(scenario_spec(1), 50000, 0.75, SimplexVector.uniform(3), seed=6, with_labels=True)
    assert abs(ds.y.mean()) < 0.02 * np.std(ds.y)


def test_gen_target_unlabeled():
    ds = gen_target(scenario_spec(3), 40, 0.5, SimplexVector.uniform(3), seed=1)
    assert ds.a is None and ds.y is None and ds.s is None
    assert ds.X.shape == (40, 30)


def test_true_target_cate_values():
    spec = scenario_spec(1)
    rho1 = SimplexVector(np.array([1.0, 0.0, 0.0]))
    assert true_target_cate(spec, np.zeros(5), 0.3, rho1) == 0.0
    e1 = np.array([1.0, 0, 0, 0, 0])
    assert true_target_cate(spec, e1, 0.0, rho1) == pytest.approx(6.0, abs=1e-12)
    # delta=1: 2 * (w1*3 + w2*1 + w3*1) with w from the softmax at e1.
    w = true_membership(spec, e1).weights
    expected = 2.0 * (w[0] * 3.0 + w[1] * 1.0 + w[2] * 1.0)
    assert true_target_cate(spec, e1, 1.0, rho1) == pytest.approx(expected, abs=1e-12)
    assert true_target_cate(spec, e1, 1.0, rho1) == pytest.approx(2.0363, abs=5e-5)


def test_cate_equals_doubled_mixture_score():
    spec = scenario_spec(3)
    rho = SimplexVector(np.array([0.2, 0.5, 0.3]))
    X = stream_rng(31, STREAM_COVARIATES).standard_normal((25, 30))
    assert np.array_equal(
        true_target_cate(spec, X, 0.6, rho), 2.0 * target_mixture_score(spec, X, 0.6, rho)
    )


def test_dirichlet_on_simplex():
    for seed in range(5):
        v = sample_dirichlet(3, 1.0, seed)
        assert np.all(v.weights >= 0)
        assert v.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_dirichlet_marginal_means():
    draws = dirichlet_draws(3, 1.0, 100_000, seed=13)
    assert np.max(np.abs(draws.mean(axis=0) - 1.0 / 3.0)) < 0.01


def test_dirichlet_concentrates_for_large_alpha():
    draws = dirichlet_draws(3, 1e4, 100, seed=14)
    assert np.max(np.abs(draws - 1.0 / 3.0)) <= 0.05


def test_dirichlet_prefix_stability():
    few = dirichlet_draws(3, 1.0, 5, seed=15)
    many = dirichlet_draws(3, 1.0, 50, seed=15)
    assert np.array_equal(few, many[:5])


def test_dirichlet_bad_alpha():
    with pytest.raises(ParameterError):
        sample_dirichlet(3, 0.0, seed=0)


def test_truncation_bounds():
    draws = truncated_standard_normal(stream_rng(1, STREAM_COVARIATES), (10000, 3))
    assert np.all(np.abs(draws) <= 10.0)


def test_csv_round_trip(tmp_path):
    ds = gen_source(scenario_spec(2), 30, seed=9)
    path = tmp_path / "data.csv"
    write_dataset_csv(ds, str(path))
    back = read_dataset_csv(str(path))
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.a, ds.a)
    assert np.array_equal(back.y, ds.y)
    assert np.array_equal(back.s, ds.s)


def test_csv_covariates_only_round_trip(tmp_path):
    ds = gen_target(scenario_spec(1), 12, 0.5, SimplexVector.uniform(3), seed=2)
    path = tmp_path / "x.csv"
    write_dataset_csv(ds, str(path))
    back = read_dataset_csv(str(path))
    assert np.array_equal(back.X, ds.X)
    assert back.a is None and back.y is None


def test_csv_malformed_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,x2,a,y\n1.0,2.0,1,0.5\n1.0,oops,0,0.1\n")
    with pytest.raises(InputError, match="line 3"):
        read_dataset_csv(str(path))


def test_csv_missing_y_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,x2,a,z\n1.0,2.0,1,3\n")
    with pytest.raises(InputError):
        read_dataset_csv(str(path))


def test_dataset_validation():
    with pytest.raises(InputError):
        Dataset(X=np.zeros((3, 2)), a=np.array([0, 1, 2]))
    with pytest.raises(InputError):
        Dataset(X=np.zeros((3, 2)), y=np.zeros(4))
