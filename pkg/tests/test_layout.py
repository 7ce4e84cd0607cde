import numpy as np
import pytest

from mic_hawkes.layout import layout, mean_mixture, validate_layout
from mic_hawkes.model import EventLog, KernelSpec, MixingSpec, ModelParams

from conftest import random_instance


def test_identity_sigma_falls_back_to_circle():
    _, params, log = random_instance(0, identity_sigma=True, n_c=4)
    doc = layout(params, log)
    assert doc.intra_cascade_edges == []
    radii = [np.hypot(*n["position"]) for n in doc.cascade_nodes]
    np.testing.assert_allclose(radii, 1.0)


def test_single_cascade_user_sits_above_it():
    # linear mixing, user 0 only has baseline on cascade 1 and no influencers
    M = np.array([[0.0, 0.5, 0.0], [0.2, 0.2, 0.2]])
    p = ModelParams(M, np.eye(3), np.zeros((2, 2)), KernelSpec(1.0), MixingSpec("linear", 0))
    log = EventLog.from_events([(0, 1, 1.0), (1, 0, 2.0)], T=3.0)
    doc = layout(p, log)
    np.testing.assert_allclose(doc.user_nodes[0]["position"], doc.cascade_nodes[1]["position"], atol=1e-12)
    assert doc.user_nodes[0]["z"] == doc.layer_offset


def test_layout_is_seed_deterministic_and_valid():
    _, params, log = random_instance(1, n_u=6, n_c=4)
    a, b = layout(params, log, seed=3).to_dict(), layout(params, log, seed=3).to_dict()
    assert a == b
    validate_layout(a, params.n_users, params.n_cascades)
    assert [e["user"] for e in a["cross_edges"]] == np.argmax(params.M, axis=0).tolist()
    assert sum(n["size"] for n in a["cascade_nodes"]) == len(log)


def test_thresholds_control_edge_count():
    _, params, log = random_instance(2, n_u=6, n_c=4, edge_prob=0.8)
    loose = layout(params, log, threshold_quantile=0.0)
    tight = layout(params, log, threshold_quantile=1.0)
    assert len(loose.intra_user_edges) == np.count_nonzero(params.W - np.diag(np.diag(params.W)))
    assert len(tight.intra_user_edges) <= len(loose.intra_user_edges)


def test_mean_mixture_rows_are_distributions():
    _, params, log = random_instance(3)
    mix = mean_mixture(params, log)
    np.testing.assert_allclose(mix.sum(axis=1), 1.0, atol=1e-12)


def test_validate_layout_catches_broken_documents():
    _, params, log = random_instance(4)
    doc = layout(params, log).to_dict()
    doc["user_nodes"][0]["mixture"] = [0.9, 0.9, 0.0]
    with pytest.raises(ValueError):
        validate_layout(doc)
    doc = layout(params, log).to_dict()
    doc["cross_edges"][0]["user"] = 99
    with pytest.raises(ValueError):
        validate_layout(doc)
