import math

import numpy as np
import pytest

from mic_hawkes.evaluation import (
    evaluate, inverse_l1, pearson, quantile_log_likelihood, ranked_activity, split_train_test,
    test_log_likelihood as heldout_loglik,
)
from mic_hawkes.likelihood import log_likelihood
from mic_hawkes.model import EventLog, ModelError, ModelParams

from conftest import random_instance


def _log(n, T=None):
    return EventLog.from_events([(i % 3, i % 2, float(i + 1)) for i in range(n)], T=T or float(n))


def test_split_by_index_with_floor():
    train, test, boundary = split_train_test(_log(10), 0.8)
    assert len(train) == 8 and len(test) == 2
    assert boundary == 8.0 == train.T and test.T == 10.0
    train, test, _ = split_train_test(_log(7), 0.5)
    assert len(train) == 3


def test_split_rejects_degenerate_input():
    with pytest.raises(ModelError):
        split_train_test(_log(10), 1.0)
    with pytest.raises(ModelError):
        split_train_test(_log(1), 0.5)


def test_inverse_l1_values():
    assert inverse_l1([1, 2, 3], [1, 2, 3]) == 1.0
    assert inverse_l1([0, 0], [1, 3]) == pytest.approx(1 / 3)
    with pytest.raises(ModelError):
        inverse_l1([1], [1, 2])


def test_pearson_values():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert pearson([1, 1, 1], [1, 2, 3]) is None


def test_ranked_activity():
    real = EventLog.from_events([(0, 0, 1.0), (1, 0, 2.0), (1, 1, 3.0), (1, 1, 4.0)], T=5)
    sims = [EventLog.from_events([(2, 0, 1.0)], T=5), EventLog.from_events([(0, 1, 1.0), (0, 1, 2.0)], T=5)]
    r = ranked_activity(real, sims, "user", 3)
    assert r.real.tolist() == [3, 1, 0]
    np.testing.assert_allclose(r.sim_mean, [1.5, 0, 0])
    np.testing.assert_allclose(r.sim_std, [0.5, 0, 0])
    assert ranked_activity(real, [], "cascade").real.tolist() == [2, 2]
    with pytest.raises(ModelError):
        ranked_activity(real, [], "weekday")


def test_heldout_log_likelihood_is_conditional_on_history():
    graph, params, log = random_instance(1, T=60.0)
    train, test, boundary = split_train_test(log, 0.8)
    full = log_likelihood(params, graph, log).total
    head = log_likelihood(params, graph, train).total
    assert heldout_loglik(params, graph, train, test) == pytest.approx(full - head, rel=1e-10)
    per_user = heldout_loglik(params, graph, train, test, per_user=True)
    assert per_user.sum() == pytest.approx(full - head, rel=1e-10)


def test_shorter_context_changes_the_score():
    graph, params, log = random_instance(2, T=60.0)
    train, test, _ = split_train_test(log, 0.8)
    a = heldout_loglik(params, graph, train, test, context_fraction=1.0)
    b = heldout_loglik(params, graph, train, test, context_fraction=0.01)
    assert math.isfinite(b) and a != b


def test_quantile_log_likelihood_sums_top_users():
    graph, params, log = random_instance(3, T=60.0, n_u=4)
    train, test, _ = split_train_test(log, 0.8)
    per_user = heldout_loglik(params, graph, train, test, per_user=True)
    top = np.argsort(-np.bincount(train.users, minlength=4), kind="stable")
    assert quantile_log_likelihood(params, graph, train, test, 0.25) == pytest.approx(per_user[top[0]])
    assert quantile_log_likelihood(params, graph, train, test, 1.0) == pytest.approx(per_user.sum())
    with pytest.raises(ModelError):
        quantile_log_likelihood(params, graph, train, test, 0.0)


def test_evaluate_report_is_complete_and_deterministic():
    graph, params, log = random_instance(4, T=80.0, n_u=4, n_c=2)
    train, test, _ = split_train_test(log, 0.8)
    a = evaluate(params, graph, train, test, n_bins=10, replications=4, seed=1).to_dict()
    b = evaluate(params, graph, train, test, n_bins=10, replications=4, seed=1).to_dict()
    assert a == b
    assert set(a["inverse_l1"]) == {"0", "1", "overall"}
    assert all(0 < v <= 1 for v in a["inverse_l1"].values())
    assert set(a["loglik_vs_train_fraction"]) == {"0.2", "0.6", "1.0"}
    assert len(a["ranked_users"]["sim_mean"]) == 4
    assert a["test_loglik"] == pytest.approx(heldout_loglik(params, graph, train, test))


def test_true_parameters_beat_a_flat_model():
    graph, params, log = random_instance(5, T=200.0, n_u=4, n_c=3, beta=6.0)
    train, test, _ = split_train_test(log, 0.8)
    flat = ModelParams(np.full(params.M.shape, params.M.mean()), np.eye(3), np.zeros_like(params.W),
                       params.kernel, params.mixing)
    assert heldout_loglik(params, graph, train, test) > heldout_loglik(flat, None, train, test)
