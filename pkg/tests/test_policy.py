import numpy as np
import pytest

from graphaug.policy import (
    AugmentationKind, GRAPH_TASK_KINDS, active_kinds, decide,
    deepset_policy, gru_policy, init_policy_params, policy_distribution,
    scale_by_policy,
)
from graphaug.rng import RngStream
from graphaug.tensor import Tensor, finite_diff_grad

from conftest import rel_err


def reps(seed=0, n=6, d=8):
    return Tensor(RngStream(seed, "reps").uniform((n, d)) - 0.5)


def test_gru_distribution_sums_to_one():
    params = init_policy_params("gru", 8, 5, seed=0)
    dist = gru_policy(reps(), params)
    assert abs(dist.data.sum() - 1.0) < 1e-9
    assert dist.shape == (5,)


def test_gru_invariant_to_row_permutation():
    params = init_policy_params("gru", 8, 5, seed=1)
    x = reps(3)
    perm = RngStream(9, "p").permutation(6)
    d1 = gru_policy(x, params)
    d2 = gru_policy(x.gather_rows(perm), params)
    assert np.array_equal(d1.data, d2.data)       # exact, via the sort


def test_gru_single_row():
    params = init_policy_params("gru", 8, 5, seed=2)
    d1 = gru_policy(reps(n=1), params)
    d2 = gru_policy(reps(n=1), params)
    assert np.array_equal(d1.data, d2.data)


def test_deepset_distribution_sums_to_one():
    params = init_policy_params("deepset", 8, 5, seed=3)
    dist = deepset_policy(reps(), params)
    assert abs(dist.data.sum() - 1.0) < 1e-9


def test_deepset_permutation_invariance():
    params = init_policy_params("deepset", 8, 5, seed=4)
    x = reps(5)
    perm = RngStream(10, "p").permutation(6)
    d1 = deepset_policy(x, params)
    d2 = deepset_policy(x.gather_rows(perm), params)
    assert np.allclose(d1.data, d2.data, atol=1e-12)


def test_deepset_duplicated_batch_differs():
    # sum pooling doubles the pooled vector; output generally changes
    params = init_policy_params("deepset", 8, 5, seed=5)
    x = reps(6)
    doubled = Tensor(np.concatenate([x.data, x.data], axis=0))
    d1 = deepset_policy(x, params)
    d2 = deepset_policy(doubled, params)
    assert not np.allclose(d1.data, d2.data)


def test_random_policy_uniform():
    dist = policy_distribution(reps(), "random", init_policy_params("random", 8, 5, 0), 5)
    assert np.array_equal(dist.data, np.full(5, 0.2))


def test_node_task_active_set():
    kinds = active_kinds("node")
    assert len(kinds) == 4
    assert AugmentationKind.SUBGRAPH not in kinds
    assert len(active_kinds("graph")) == 5


def test_decide_concentrated_distribution():
    # dist with ~0.999 mass on identity -> i = j = identity nearly always
    stream = RngStream(8, "dec")
    hits = 0
    for trial in range(1000):
        dec = decide_with_dist(np.array([2.5e-4, 2.5e-4, 2.5e-4, 2.5e-4, 0.999]),
                               stream.split(str(trial)))
        hits += (dec.i == AugmentationKind.IDENTITY
                 and dec.j == AugmentationKind.IDENTITY)
    assert hits / 1000 >= 0.99


def decide_with_dist(dist_values, stream):
    from graphaug.sampling import gumbel_softmax
    from graphaug.policy import PolicyDecision
    dist = Tensor(np.asarray(dist_values))
    log_dist = dist.clip_min(1e-30).log()
    s_i = gumbel_softmax(log_dist, 1.0, stream.split("i"))
    s_j = gumbel_softmax(log_dist, 1.0, stream.split("j"))
    kinds = GRAPH_TASK_KINDS
    return PolicyDecision(dist, kinds, kinds[s_i.hard], kinds[s_j.hard],
                          dist.gather_rows([s_i.hard]).reshape(()),
                          dist.gather_rows([s_j.hard]).reshape(()))


def test_decide_returns_consistent_probs():
    params = init_policy_params("gru", 8, 5, seed=6)
    dec = decide(reps(), "gru", 1.0, RngStream(0, "d"), params)
    i_idx = dec.kinds.index(dec.i)
    j_idx = dec.kinds.index(dec.j)
    assert dec.p_i.item() == dec.dist.data[i_idx]
    assert dec.p_j.item() == dec.dist.data[j_idx]
    assert abs(dec.dist.data.sum() - 1.0) < 1e-9


def test_scale_by_policy_identity_and_half():
    h = Tensor(np.array([[2.0, -4.0]]))
    assert np.array_equal(scale_by_policy(h, Tensor(1.0)).data, h.data)
    assert np.array_equal(scale_by_policy(h, Tensor(0.5)).data, [[1.0, -2.0]])


def test_scale_by_zero_warns():
    with pytest.warns(RuntimeWarning):
        scale_by_policy(Tensor(np.ones((1, 2))), Tensor(0.0))


def test_policy_gradient_via_scaling():
    # loss depending on scaled h_G must reach the policy parameters
    params = init_policy_params("gru", 6, 5, seed=7)
    x = Tensor(RngStream(2, "x").uniform((3, 6)))
    h_g = Tensor(RngStream(3, "h").uniform((3, 6)))

    def loss_fn_param(w_flat):
        params["out/w"].data = w_flat.data.reshape(6, 5)
        dist = gru_policy(x, params)
        p = dist.gather_rows([2]).reshape(())
        return (scale_by_policy(h_g, p) ** 2.0).sum()

    w0 = params["out/w"].data.copy()
    dist = gru_policy(x, params)
    p = dist.gather_rows([2]).reshape(())
    loss = (scale_by_policy(h_g, p) ** 2.0).sum()
    loss.backward()
    analytic = params["out/w"].grad.copy()
    fd = finite_diff_grad(loss_fn_param, Tensor(w0.reshape(-1))).data.reshape(6, 5)
    params["out/w"].data = w0
    assert np.abs(analytic).max() > 0
    assert rel_err(analytic, fd) <= 1e-3
