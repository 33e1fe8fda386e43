import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldpboost.boosting import LearnerConfig, fit_samme_centralized
from ldpboost.data import SynthSpec, gen_synthetic
from ldpboost.federation import (
    BudgetExhaustedError,
    BudgetLedger,
    Federation,
    FederationConfig,
    derived_rng,
    partition_owners,
    run_boosting,
    select_group,
)


@pytest.fixture(scope="module")
def small():
    ds = gen_synthetic(SynthSpec(n=1200, seed=3))
    return ds.X, ds.y


def test_partition_disjoint_and_complete(small):
    X, y = small
    owners = partition_owners(X, y, 7, np.random.default_rng(0))
    assert [o.id for o in owners] == list(range(7))
    sizes = [o.n for o in owners]
    assert sum(sizes) == len(y) and max(sizes) - min(sizes) <= 1
    w = np.concatenate([o.weights for o in owners])
    assert w.sum() == pytest.approx(1.0)
    rows = np.vstack([o.X for o in owners])
    assert sorted(map(tuple, rows)) == sorted(map(tuple, X))


def test_partition_rejects_bad_counts(small):
    X, y = small
    with pytest.raises(ValueError):
        partition_owners(X[:3], y[:3], 4, np.random.default_rng(0))


def test_config_budget_check():
    with pytest.raises(BudgetExhaustedError):
        FederationConfig(owners=10, group_size=4, rounds=3)
    with pytest.raises(ValueError):
        FederationConfig(owners=10, group_size=4, rounds=2, mechanism="pm", full_participation=True)
    FederationConfig(owners=10, group_size=10, rounds=5, mechanism="noop", full_participation=True)


def test_select_group_marks_owners(small):
    X, y = small
    owners = partition_owners(X, y, 6, np.random.default_rng(0))
    g1 = select_group(owners, 3, np.random.default_rng(1))
    g2 = select_group(owners, 3, np.random.default_rng(2))
    assert not {o.id for o in g1} & {o.id for o in g2}
    with pytest.raises(BudgetExhaustedError):
        select_group(owners, 1, np.random.default_rng(3))


@settings(max_examples=100)
@given(st.lists(st.lists(st.integers(0, 15), min_size=1, max_size=5), min_size=1, max_size=8))
def test_ledger_rejects_any_reuse(schedule):
    ledger = BudgetLedger()
    seen = set()
    for rnd, group in enumerate(schedule):
        reuse = len(set(group)) != len(group) or bool(seen & set(group))
        if reuse:
            with pytest.raises(BudgetExhaustedError):
                ledger.charge(group, rnd)
            return
        ledger.charge(group, rnd)
        seen |= set(group)


def test_federated_noop_matches_centralized(small):
    X, y = small
    cfg = FederationConfig(owners=12, group_size=12, rounds=6, mechanism="noop", full_participation=True)
    ens, reports = run_boosting(cfg, X, y)
    ref, rounds = fit_samme_centralized(X, y, 2, 6)
    for (a, m), (b, r) in zip(ens.members, ref.members):
        assert (m.attr, m.label0, m.label1) == (r.attr, r.label0, r.label1)
        assert a == pytest.approx(b, abs=1e-9)
    assert [rep.err for rep in reports] == pytest.approx([r.err for r in rounds], abs=1e-9)


def test_federated_noop_ncc_matches_weighted_centroids(small):
    X, y = small
    cfg = FederationConfig(owners=10, group_size=10, rounds=4, mechanism="noop", learner=LearnerConfig(kind="ncc"),
                           full_participation=True)
    ens, _ = run_boosting(cfg, X, y)
    ref, _ = fit_samme_centralized(X, y, 2, 4, LearnerConfig(kind="ncc"))
    for (a, m), (b, r) in zip(ens.members, ref.members):
        assert np.allclose(m.centroids, r.centroids, atol=1e-9)
        assert a == pytest.approx(b, abs=1e-9)


def test_private_run_is_deterministic_and_fresh_each_round(small):
    X, y = small
    cfg = FederationConfig(owners=40, group_size=10, rounds=4, epsilon=2.0, seed=9)
    a, ra = run_boosting(cfg, X, y)
    b, rb = run_boosting(cfg, X, y)
    assert a.to_dict() == b.to_dict()
    groups = [set(r.group) for r in ra]
    assert sum(len(g) for g in groups) == len(set().union(*groups)) == 40
    assert all(r.noise_scale > 0 for r in ra)


def test_global_weights_stay_normalized(small):
    X, y = small
    fed = Federation.from_data(FederationConfig(owners=20, group_size=5, rounds=3, epsilon=4.0,
                                                learner=LearnerConfig(kind="ncc")), X, y)
    fed.run()
    assert fed.global_weights().sum() == pytest.approx(1.0, abs=1e-9)
    assert np.max(fed.global_weights() * fed.n_total) <= fed.weight_bound * (1 + 1e-9)


def test_message_log_shows_only_shares_and_masked_values(small):
    X, y = small
    cfg = FederationConfig(owners=10, group_size=5, rounds=2, epsilon=1.0, record_messages=True)
    fed = Federation.from_data(cfg, X, y)
    fed.run()
    kinds = {e["type"] for e in fed.user_log}
    assert kinds == {"share", "broadcast", "secure_sum"}
    shares = [e for e in fed.user_log if e["type"] == "share"]
    assert len(shares) == 10 and len({e["owner"] for e in shares}) == 10
    assert fed.ring_log and all(0 <= m.carrier < 2**64 for m in fed.ring_log)


def test_workers_do_not_change_results(small):
    X, y = small
    base = dict(owners=30, group_size=10, rounds=3, epsilon=3.0, learner=LearnerConfig(kind="lr"), seed=4)
    a, _ = run_boosting(FederationConfig(**base), X, y)
    b, _ = run_boosting(FederationConfig(**base, workers=4), X, y)
    assert a.to_dict() == b.to_dict()


def test_strict_mode_aborts_on_chance_round():
    X = np.array([[0.5], [0.5], [-0.5], [-0.5]] * 5)
    y = np.array([0, 1, 0, 1] * 5)
    from ldpboost.boosting import StrictModeAbort
    cfg = FederationConfig(owners=4, group_size=4, rounds=1, mechanism="noop", strict=True)
    with pytest.raises(StrictModeAbort):
        run_boosting(cfg, X, y)
    _, reports = run_boosting(FederationConfig(owners=4, group_size=4, rounds=1, mechanism="noop"), X, y)
    assert "alpha_nonpositive" in reports[0].flags


def test_derived_rng_streams_differ():
    a = derived_rng(1, 2, 3).random()
    assert a == derived_rng(1, 2, 3).random()
    assert a != derived_rng(1, 2, 4).random()
