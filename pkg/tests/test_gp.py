"""Gaussian-process posterior math checked against hand-solved systems."""

import numpy as np
import pytest

from sparsetouch import gp
from sparsetouch.dataset import make_folds
from sparsetouch.errors import ConditioningError, ValidationError

PARAMS = gp.GpKernelParams(l_scale=0.7, l_p=1.5, beta_inv=1e-3)


def _dense_posterior(locations, observed, values, params, query_idx):
    """Reference posterior via an explicit solve (no Cholesky reuse)."""
    noise = params.beta_inv + gp.CHOLESKY_JITTER
    pa = locations[list(observed)]
    sigma = gp.exp_kernel_matrix(pa, pa, params) + noise * np.eye(len(observed))
    k_vec = gp.exp_kernel_matrix(pa, locations[query_idx], params)[:, 0]
    mean = k_vec @ np.linalg.solve(sigma, values)
    var = 1.0 - k_vec @ np.linalg.solve(sigma, k_vec)
    return mean, var


def test_posterior_matches_dense_solve():
    loc = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]])
    values = np.array([2.0, -1.0])
    model = gp.GpModel(loc, PARAMS, coord_scale=1.0, observed=(0, 1), values=values)
    mean, var = model.posterior(2)
    ref_mean, ref_var = _dense_posterior(loc, (0, 1), values, PARAMS, 2)
    assert mean == pytest.approx(ref_mean, abs=1e-10)
    assert var == pytest.approx(ref_var, abs=1e-10)


def test_posterior_many_sites_matches_dense_solve(rng):
    loc = rng.uniform(0, 1, size=(12, 2))
    obs = (0, 3, 5, 9, 11)
    vals = rng.standard_normal(len(obs))
    model = gp.GpModel(loc, PARAMS, coord_scale=1.0, observed=obs, values=vals)
    for q in (1, 2, 4, 10):
        mean, var = model.posterior(q)
        ref_mean, ref_var = _dense_posterior(loc, obs, vals, PARAMS, q)
        assert mean == pytest.approx(ref_mean, abs=1e-10)
        assert var == pytest.approx(ref_var, abs=1e-10)


def test_noiseless_model_interpolates_observations():
    params = gp.GpKernelParams(l_scale=0.5, l_p=2.0, beta_inv=0.0)
    loc = np.array([[0.0, 0.0], [0.6, 0.1], [0.2, 0.9]])
    model = gp.GpModel(loc, params, coord_scale=1.0,
                       observed=(0, 2), values=np.array([3.7, -1.2]))
    for idx, want in ((0, 3.7), (2, -1.2)):
        mean, var = model.posterior(idx)
        assert mean == pytest.approx(want, abs=1e-5)
        assert var == pytest.approx(0.0, abs=1e-6)


def test_unconditioned_model_returns_prior():
    loc = np.array([[0.0, 0.0], [1.0, 1.0]])
    mu = np.array([0.25, -4.0])
    model = gp.GpModel(loc, PARAMS, coord_scale=1.0, mu=mu)
    assert model.posterior(0) == (0.25, 1.0)
    assert model.posterior(1) == (-4.0, 1.0)


def test_prior_mean_enters_posterior():
    # mean should be mu_q + k^T Sigma^-1 (y - mu_A), not just the data term
    loc = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
    mu = np.array([1.0, 2.0, 3.0])
    vals = np.array([2.0])  # observation at site 1, exactly the prior mean
    model = gp.GpModel(loc, PARAMS, coord_scale=1.0, mu=mu,
                       observed=(1,), values=vals)
    mean, _ = model.posterior(0)
    assert mean == pytest.approx(1.0, abs=1e-12)


def test_conditioning_never_raises_variance(rng):
    gx, gy = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 4))
    loc = np.column_stack([gx.ravel(), gy.ravel()])
    params = gp.GpKernelParams(l_scale=0.5, l_p=1.9, beta_inv=1e-4)
    for _ in range(50):
        order = rng.permutation(len(loc))[:6]
        model = gp.GpModel(loc, params, coord_scale=1.0)
        var = np.ones(len(loc))
        for pick in order:
            model = model.condition_on(int(pick), 0.0)
            new = np.array([model.posterior(i)[1] for i in range(len(loc))
                            if i not in model.observed])
            rest = np.array([var[i] for i in range(len(loc))
                             if i not in model.observed])
            assert np.all(new <= rest + 1e-12)
            for i in range(len(loc)):
                if i not in model.observed:
                    var[i] = model.posterior(i)[1]


def test_observation_order_is_irrelevant(rng):
    loc = rng.uniform(0, 1, size=(10, 2))
    a = gp.GpModel(loc, PARAMS, coord_scale=1.0,
                   observed=(2, 7, 5), values=np.array([1.5, -0.4, 2.2]))
    b = gp.GpModel(loc, PARAMS, coord_scale=1.0,
                   observed=(5, 2, 7), values=np.array([2.2, 1.5, -0.4]))
    for q in (0, 1, 3, 9):
        ma, va = a.posterior(q)
        mb, vb = b.posterior(q)
        assert ma == pytest.approx(mb, abs=1e-9)
        assert va == pytest.approx(vb, abs=1e-9)


def test_incremental_conditioning_matches_batch(rng):
    loc = rng.uniform(0, 1, size=(9, 2))
    picks = (4, 1, 7)
    vals = np.array([0.3, -1.1, 0.8])
    batch = gp.GpModel(loc, PARAMS, coord_scale=1.0, observed=picks, values=vals)
    chain = gp.GpModel(loc, PARAMS, coord_scale=1.0)
    for idx, v in zip(picks, vals):
        chain = chain.condition_on(idx, v)
    for q in range(9):
        if q in picks:
            continue
        mb, vb = batch.posterior(q)
        mc, vc = chain.posterior(q)
        assert mc == pytest.approx(mb, abs=1e-10)
        assert vc == pytest.approx(vb, abs=1e-10)


def test_condition_on_leaves_original_untouched():
    loc = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    base = gp.GpModel(loc, PARAMS, coord_scale=1.0)
    grown = base.condition_on(1, 5.0)
    assert base.observed == ()
    assert base.posterior(0) == (0.0, 1.0)
    assert grown.observed == (1,)
    assert grown.posterior(0)[1] < 1.0


def test_multi_trial_values_give_vector_means():
    loc = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 0.0]])
    vals = np.array([[1.0, 2.0, 3.0], [0.5, 0.5, 0.5]])  # two sites, three trials
    model = gp.GpModel(loc, PARAMS, coord_scale=1.0, observed=(0, 2), values=vals)
    mean, var = model.posterior(1)
    assert mean.shape == (3,)
    assert np.isscalar(var)
    for t in range(3):
        ref_mean, _ = _dense_posterior(loc, (0, 2), vals[:, t], PARAMS, 1)
        assert mean[t] == pytest.approx(ref_mean, abs=1e-10)


# -- kernel and distance helpers ------------------------------------------


def test_geodesic_distance_basic_properties(rng):
    pts = rng.uniform(-3, 3, size=(30, 2))
    for a, b, c in pts.reshape(10, 3, 2):
        dab = gp.geodesic_distance(a, b)
        assert dab == gp.geodesic_distance(b, a)
        assert gp.geodesic_distance(a, a) == 0.0
        assert dab <= gp.geodesic_distance(a, c) + gp.geodesic_distance(c, b) + 1e-12


def test_kernel_is_exp_minus_one_at_length_scale():
    for l_p in (0.5, 1.0, 1.9, 2.0):
        params = gp.GpKernelParams(l_scale=0.31, l_p=l_p)
        val = gp.exp_kernel((0.0, 0.0), (0.31, 0.0), params)
        assert val == pytest.approx(np.exp(-1.0), rel=1e-12)


def test_kernel_matrix_matches_pairwise_calls(rng):
    A = rng.uniform(0, 1, size=(5, 2))
    B = rng.uniform(0, 1, size=(4, 2))
    K = gp.exp_kernel_matrix(A, B, PARAMS)
    for i in range(5):
        for j in range(4):
            assert K[i, j] == pytest.approx(gp.exp_kernel(A[i], B[j], PARAMS),
                                            abs=1e-12)
    KAA = gp.exp_kernel_matrix(A, A, PARAMS)
    np.testing.assert_allclose(KAA, KAA.T, atol=1e-15)
    np.testing.assert_allclose(np.diag(KAA), 1.0, atol=1e-12)


def test_documented_kernel_settings_are_accepted():
    params = gp.GpKernelParams(l_scale=0.033, l_p=1.9)
    assert params.beta_inv == gp.DEFAULT_BETA_INV
    again = gp.GpKernelParams.from_dict(params.to_dict())
    assert again == params


@pytest.mark.parametrize("kwargs", [
    {"l_scale": 0.0, "l_p": 1.9},
    {"l_scale": -1.0, "l_p": 1.9},
    {"l_scale": 0.5, "l_p": 0.0},
    {"l_scale": 0.5, "l_p": 2.5},
    {"l_scale": 0.5, "l_p": 1.9, "beta_inv": -1e-6},
    {"l_scale": np.inf, "l_p": 1.9},
])
def test_kernel_params_reject_bad_values(kwargs):
    with pytest.raises(ValidationError):
        gp.GpKernelParams(**kwargs)


# -- failure modes ----------------------------------------------------------


def test_cholesky_error_names_min_eigenvalue():
    with pytest.raises(ConditioningError) as err:
        gp.cholesky_or_error(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert err.value.min_eigenvalue == pytest.approx(-1.0, abs=1e-12)
    assert err.value.exit_code == 2


def test_model_rejects_bad_inputs():
    loc = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ValidationError):
        gp.GpModel(np.zeros((3, 3)), PARAMS)
    with pytest.raises(ValidationError):
        gp.GpModel(loc, PARAMS, coord_scale=-1.0)
    with pytest.raises(ValidationError):
        gp.GpModel(loc, PARAMS, mu=np.zeros(5))
    with pytest.raises(ValidationError):
        gp.GpModel(loc, PARAMS, observed=(0, 0), values=np.zeros(2))
    with pytest.raises(ValidationError):
        gp.GpModel(loc, PARAMS, observed=(4,), values=np.zeros(1))
    with pytest.raises(ValidationError):
        gp.GpModel(loc, PARAMS, observed=(0,), values=np.zeros(3))


def test_condition_on_rejects_repeats_and_bad_shapes():
    loc = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    model = gp.GpModel(loc, PARAMS, coord_scale=1.0,
                       observed=(0,), values=np.array([[1.0, 2.0]]))
    with pytest.raises(ValidationError):
        model.condition_on(0, np.array([1.0, 1.0]))
    with pytest.raises(ValidationError):
        model.condition_on(1, np.array([1.0, 1.0, 1.0]))


def test_query_by_coordinate_and_rejection():
    loc = np.array([[0.0, 0.0], [30.0, 40.0]])
    model = gp.GpModel(loc, PARAMS, coord_scale=50.0, observed=(0,),
                       values=np.array([1.0]))
    by_idx = model.posterior(1)
    by_loc = model.posterior(np.array([30.0, 40.0]))
    assert by_idx == by_loc
    with pytest.raises(ValidationError):
        model.posterior(np.array([17.0, 3.0]))
    with pytest.raises(ValidationError):
        model.posterior(5)


def test_default_coord_scale_is_bounding_box_diagonal():
    loc = np.array([[0.0, 0.0], [30.0, 40.0], [15.0, 10.0]])
    model = gp.GpModel(loc, PARAMS)
    assert model.coord_scale == pytest.approx(50.0)
    np.testing.assert_allclose(model.locations[1], [0.6, 0.8])


# -- hyperparameter search --------------------------------------------------


def test_grid_search_recovers_generating_length_scale():
    rng = np.random.default_rng(7)
    gx, gy = np.meshgrid(np.linspace(0, 1, 6), np.linspace(0, 1, 5))
    loc = np.column_stack([gx.ravel(), gy.ravel()])
    true = gp.GpKernelParams(l_scale=0.2, l_p=2.0, beta_inv=1e-4)
    cov = gp.exp_kernel_matrix(loc, loc, true)
    cov[np.diag_indices(len(loc))] += true.beta_inv + gp.CHOLESKY_JITTER
    draws = np.linalg.cholesky(cov) @ rng.standard_normal((len(loc), 40))
    folds = make_folds(len(loc), 3, seed=0)
    got = gp.gp_grid_search(loc, draws, (0.05, 0.1, 0.2, 0.4, 0.8), (1.0, 2.0),
                            folds, coord_scale=1.0, beta_inv=1e-4)
    assert got.l_scale == 0.2
    assert got.l_p == 2.0


def test_grid_search_validates_inputs():
    loc = np.zeros((4, 2))
    loc[:, 0] = np.arange(4)
    folds = make_folds(4, 2, seed=0)
    with pytest.raises(ValidationError):
        gp.gp_grid_search(loc, np.zeros(3), (0.5,), (2.0,), folds)
    with pytest.raises(ValidationError):
        gp.gp_grid_search(loc, np.zeros(4), (), (2.0,), folds)
    with pytest.raises(ValidationError):
        gp.gp_grid_search(loc, np.zeros(4), (0.5,), (), folds)
