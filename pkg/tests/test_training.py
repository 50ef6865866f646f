import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdln.data import DEFAULT_PROMPTS, kfold_split
from cdln.errors import ConfigError, ContractError, DataError
from cdln.fusion import CdlnConfig
from cdln.models import predict_normalized
from cdln.synthetic import length_tied_essays, memorisation_setup
from cdln.training import TrainConfig, cross_validate, fit_model, mse_loss, train_model

FAST = TrainConfig(learning_rate=0.01, batch_size=4, epochs=2, dropout_rate=0.0, vocab_min_count=1, k_folds=8)


@pytest.mark.parametrize("pred,gold,want", [([0.3, 0.7], [0.3, 0.7], 0.0), ([0, 0], [1, 1], 1.0), ([1], [0.5], 0.25)])
def test_mse_examples(pred, gold, want):
    assert mse_loss(pred, gold) == want


def test_mse_rejects_mismatch_and_empty():
    with pytest.raises(ContractError):
        mse_loss([1.0], [1.0, 2.0])
    with pytest.raises(ContractError):
        mse_loss([], [])


@pytest.mark.parametrize("field,value", [("epochs", 0), ("learning_rate", 0.0), ("batch_size", 0),
                                         ("dropout_rate", 1.0), ("k_folds", 1)])
def test_train_config_rejects(field, value):
    with pytest.raises(ConfigError):
        TrainConfig(**{field: value})


def test_empty_training_set():
    with pytest.raises(DataError):
        fit_model("cdln", [], FAST, CdlnConfig.toy())


@pytest.mark.parametrize("kind", ["cdln", "rnn", "ann", "lstm"])
def test_same_seed_same_parameters(kind):
    from cdln.models import default_config
    essays = length_tied_essays(6)
    cfg = TrainConfig(learning_rate=0.01, batch_size=2, epochs=2, dropout_rate=0.2, seed=3, vocab_min_count=1)
    a = fit_model(kind, essays, cfg, default_config(kind, toy=True))
    b = fit_model(kind, essays, cfg, default_config(kind, toy=True))
    assert a.losses == b.losses
    for p, q in zip(a.model.parameters(), b.model.parameters()):
        assert np.array_equal(p.data, q.data)


def test_epoch_hook_sees_every_epoch():
    seen = []
    fit_model("ann", length_tied_essays(4), FAST, None, on_epoch=lambda e, loss: seen.append((e, loss)))
    assert [e for e, _ in seen] == [1, 2]


def test_memorises_sixteen_essays():
    essays, cfg, model_cfg = memorisation_setup()
    result = fit_model("cdln", essays, cfg, model_cfg)
    pred = predict_normalized(result.model, essays)
    assert mse_loss(pred, [e.normalized_score for e in essays]) < 1e-3
    assert result.losses[0] / result.losses[-1] >= 100


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(2, 8), st.integers(0, 10_000))
def test_folds_partition_the_essays(n, k, seed):
    if n < k:
        n = k
    essays = length_tied_essays(n)
    assign = kfold_split(essays, k, seed)
    assert sorted(assign) == sorted(e.essay_id for e in essays)
    assert set(assign.values()) <= set(range(k))
    sizes = np.bincount(list(assign.values()), minlength=k)
    assert sizes.min() >= 1 and sizes.max() - sizes.min() <= 1


def test_eight_folds_on_sixteen_essays():
    result = cross_validate(length_tied_essays(16), FAST, kind="ann")
    assert len(result.folds) == 8
    assert sum(r.n for r in result.folds) == 16
    for field in ("accuracy", "pcc", "qwk", "mse"):
        values = [getattr(r, field) for r in result.folds]
        want = float(np.mean(values))
        got = getattr(result.mean, field)
        assert (np.isnan(want) and np.isnan(got)) or got == pytest.approx(want, abs=1e-15)


def test_single_essay_folds_give_nan_pcc():
    cfg = TrainConfig(learning_rate=0.01, batch_size=1, epochs=1, k_folds=2, vocab_min_count=1)
    result = cross_validate(length_tied_essays(2), cfg, kind="ann")
    assert len(result.folds) == 2
    assert all(np.isnan(r.pcc) for r in result.folds)
    assert np.isnan(result.mean.pcc)


def test_too_few_essays_for_folds():
    with pytest.raises(ContractError):
        cross_validate(length_tied_essays(3), FAST, kind="ann")


def test_worker_count_does_not_change_results():
    cfg = TrainConfig(learning_rate=0.01, batch_size=4, epochs=1, k_folds=2, vocab_min_count=1)
    essays = length_tied_essays(8)
    one = cross_validate(essays, cfg, kind="ann", workers=1)
    two = cross_validate(essays, cfg, kind="ann", workers=2)
    assert [r.record() for r in one.folds] == [r.record() for r in two.folds]


def test_svm_crossval_runs():
    cfg = TrainConfig(k_folds=2)
    result = cross_validate(length_tied_essays(8), cfg, kind="svm", specs=DEFAULT_PROMPTS)
    assert len(result.folds) == 2
