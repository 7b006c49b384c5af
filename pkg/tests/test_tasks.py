import numpy as np
import pytest

from spectralreg import ContractError, Network, NumericError, tasks
from spectralreg.regularizers import RegularizerSpec
from spectralreg.tasks import (
    MetricsRecord,
    PGDConfig,
    SeparableFunctionSpec,
    TrainConfig,
    classify_accuracy,
    gen_separable,
    gen_two_gaussians,
    load_packaged_dataset,
    make_dataset,
    method_config,
    pgd_attack,
    stage_iterations,
    stage_power,
    train_task,
)

rng = np.random.default_rng(77)


TINY = dict(
    epochs=2, batch_size=32, dim=6, hidden=(12,), train_count=96,
    test_count=48, eval_points=3, decay_epochs=(2,),
)


# --------------------------------------------------------------------- data


def test_gen_separable_square_value():
    spec = SeparableFunctionSpec("square", 2, "value")
    x, y = gen_separable(spec, 10, seed=0)
    np.testing.assert_allclose(y[:, 0], np.sum(x * x, axis=1))
    # spot check the documented point
    assert np.sum(np.array([1.0, 2.0]) ** 2) == 5.0


def test_gen_separable_sin_gradient_at_zero():
    spec = SeparableFunctionSpec("sin", 4, "gradient-field")
    x, y = gen_separable(spec, 5, seed=1)
    np.testing.assert_allclose(y, np.cos(x))
    assert np.allclose(np.cos(np.zeros(4)), np.ones(4))


def test_gen_separable_standard_normal_inputs():
    spec = SeparableFunctionSpec("sin", 3, "value")
    x, _ = gen_separable(spec, 100_000, seed=2)
    assert np.max(np.abs(np.mean(x, axis=0))) < 0.02


def test_separable_spec_validation():
    with pytest.raises(ContractError):
        SeparableFunctionSpec("cube", 3, "value")
    with pytest.raises(ContractError):
        SeparableFunctionSpec("sin", 3, "other")


def test_two_gaussians_in_unit_box():
    x, y = gen_two_gaussians(8, 500, seed=3)
    assert x.min() >= 0.0 and x.max() <= 1.0
    assert set(np.unique(y)) == {-1.0, 1.0}
    assert abs(np.mean(y)) < 0.2


# ---------------------------------------------------------------- schedules


def test_stage_schedules():
    assert [stage_iterations(2, s) for s in range(4)] == [2, 4, 8, 16]
    assert [stage_power(s) for s in range(5)] == [0.25, 0.5, 0.75, 0.95, 0.95]
    assert stage_power(0, scale=0.1) == 0.025


def test_train_config_stage_at():
    cfg = TrainConfig(task="robustness", decay_epochs=(3, 5), train_count=64,
                      batch_size=32, dim=4)
    assert [cfg.stage_at(e) for e in (1, 3, 4, 5, 6)] == [0, 0, 1, 1, 2]


def test_train_config_validation():
    with pytest.raises(ContractError):
        TrainConfig(task="nope")
    with pytest.raises(ContractError):
        TrainConfig(task="robustness", decay_epochs=(5, 3))
    with pytest.raises(ContractError):
        TrainConfig(task="robustness", batch_size=10_000)


# --------------------------------------------------------------------- pgd


def scalar_classifier(dim, seed=0):
    return Network.init([dim, 8, 1], seed=seed)


def test_pgd_epsilon_zero_returns_inputs():
    net = scalar_classifier(4)
    x, y = gen_two_gaussians(4, 32, seed=4)
    adv = pgd_attack(net, x, y, epsilon=0.0, step=0.01, k=5, seed=0)
    np.testing.assert_array_equal(adv, x)


def test_pgd_linear_classifier_moves_against_margin():
    w = np.array([[1.0], [-2.0], [0.5]])
    net = Network.linear(w)
    x = np.full((1, 3), 0.5)
    y = np.array([[1.0]])
    adv = pgd_attack(net, x, y, epsilon=0.1, step=0.2, k=1,
                     clip_min=None, clip_max=None, seed=5)
    # loss gradient for label +1 points along -w: the step moves x by
    # -step * sign(w) (clipped to the epsilon ball)
    np.testing.assert_allclose(adv - x, -0.1 * np.sign(w.T), atol=1e-12)


def test_pgd_never_leaves_ball_or_box():
    net = scalar_classifier(6, seed=6)
    x, y = gen_two_gaussians(6, 64, seed=7)
    eps = 8.0 / 255.0
    adv = pgd_attack(net, x, y, epsilon=eps, step=2.0 / 255.0, k=20, seed=8)
    assert np.max(np.abs(adv - x)) <= eps + 1e-12
    assert adv.min() >= 0.0 and adv.max() <= 1.0


def test_robust_accuracy_never_exceeds_clean():
    for seed in range(3):
        net = scalar_classifier(5, seed=seed)
        x, y = gen_two_gaussians(5, 128, seed=seed)
        clean = classify_accuracy(net, x, y)
        adv = pgd_attack(net, x, y, epsilon=0.05, step=0.0125, k=10, seed=seed)
        assert classify_accuracy(net, adv, y) <= clean + 1e-12


# ------------------------------------------------------------------ training


def test_zero_epoch_run_returns_initialization_metrics():
    cfg = TrainConfig(task="disentanglement", **{**TINY, "epochs": 0})
    result = train_task(cfg)
    assert len(result.records) == 1
    assert result.records[0].epoch == 0
    assert not result.aborted


def test_training_is_deterministic():
    cfg = TrainConfig(
        task="conservative-field", seed=5,
        regularizer=RegularizerSpec("symmetry", iterations=2), **TINY,
    )
    a = train_task(cfg)
    b = train_task(cfg)
    assert a.summary == b.summary
    for ra, rb in zip(a.records, b.records):
        assert ra.task_loss == rb.task_loss
        assert ra.penalty == rb.penalty
    for wa, wb in zip(a.net.param_arrays(), b.net.param_arrays()):
        np.testing.assert_array_equal(wa, wb)


def test_schedule_conformance_from_emitted_metrics():
    cfg = TrainConfig(
        task="conservative-field", seed=1,
        regularizer=RegularizerSpec("symmetry", iterations=2),
        **{**TINY, "epochs": 4, "decay_epochs": (2, 3)},
    )
    result = train_task(cfg)
    for record in result.records[1:]:
        stage = cfg.stage_at(record.epoch)
        assert record.solver_iterations == 2 * 2 ** stage
        assert record.reg_power == min(0.25 * (stage + 1), 0.95)


def test_penalty_final_below_initial_on_regularized_run():
    cfg = TrainConfig(
        task="conservative-field", seed=3,
        regularizer=RegularizerSpec("symmetry", iterations=2),
        **{**TINY, "epochs": 6, "decay_epochs": (4,), "train_count": 192},
    )
    result = train_task(cfg)
    assert result.records[-1].penalty < result.records[0].penalty


def test_robustness_task_records_accuracies():
    cfg = TrainConfig(
        task="robustness", seed=2,
        regularizer=RegularizerSpec("zero-hessian", iterations=2),
        pgd=PGDConfig(steps=5),
        **TINY,
    )
    result = train_task(cfg)
    final = result.records[-1]
    assert 0.0 <= final.robust_acc <= final.clean_acc <= 1.0
    assert final.offdiag_mass is not None
    assert result.summary["penalty_step_variance"] is not None


def test_metrics_record_rejects_nonfinite():
    with pytest.raises(NumericError):
        MetricsRecord(epoch=0, stage=0, solver_iterations=0, reg_power=0.0,
                      task_loss=float("nan"))


def test_dataset_standardization_roundtrip():
    cfg = TrainConfig(task="disentanglement", **TINY)
    data = make_dataset(cfg)
    scaled = data.scaled_train_targets()
    np.testing.assert_allclose(np.mean(scaled), 0.0, atol=1e-12)
    np.testing.assert_allclose(np.std(scaled), 1.0, atol=1e-12)
    np.testing.assert_allclose(
        scaled * data.y_scale + data.y_shift, data.y_train, atol=1e-10
    )


# ------------------------------------------------------------------- methods


def test_method_config_presets():
    base = TrainConfig(task="robustness", regularizer=RegularizerSpec("zero-hessian"),
                       **TINY)
    assert method_config(base, "normal").regularizer is None
    hutch = method_config(base, "hutchinson")
    assert hutch.regularizer.solver == "hutchinson-gaussian"
    assert hutch.power_scale == 1.0
    tenth = method_config(base, "hutchinson-0.1")
    assert tenth.power_scale == 0.1
    assert method_config(base, "power").regularizer.solver == "power"
    assert method_config(base, "lanczos").regularizer.solver == "lanczos"
    assert method_config(base, "gradascent").regularizer.solver == "gradient-ascent"
    with pytest.raises(ContractError):
        method_config(base, "unknown")


def test_probe_metrics_above_dense_limit():
    import spectralreg.tasks as tasks_mod
    from spectralreg.tasks import asymmetry_metric, offdiag_metric

    net = Network.init([6, 8, 6], seed=9)
    snet = Network.init([6, 8, 1], seed=10)
    xs = rng.normal(size=(2, 6))
    dense_asym, source = asymmetry_metric(net, xs)
    assert source == "dense"
    dense_off, source = offdiag_metric(snet, xs)
    assert source == "dense"
    # force the probe path and compare against the dense truth
    old = tasks_mod.DENSE_METRIC_LIMIT
    tasks_mod.DENSE_METRIC_LIMIT = 2
    try:
        probe_asym, source = asymmetry_metric(net, xs, probes=4000, seed=1)
        assert source == "probe"
        assert abs(probe_asym - dense_asym) < 0.1 * dense_asym
        probe_off, source = offdiag_metric(snet, xs, probes=4000, seed=2)
        assert source == "probe"
        assert abs(probe_off - dense_off) < 0.2 * dense_off
    finally:
        tasks_mod.DENSE_METRIC_LIMIT = old


def test_packaged_dataset_adapter(tmp_path):
    gen = np.random.default_rng(0)
    path = tmp_path / "packaged.npz"
    np.savez(
        path,
        x_train=gen.uniform(size=(64, 6)),
        y_train=np.where(gen.random((64, 1)) < 0.5, 1.0, -1.0),
        x_test=gen.uniform(size=(32, 6)),
        y_test=np.where(gen.random((32, 1)) < 0.5, 1.0, -1.0),
    )
    cfg = TrainConfig(task="robustness", dataset_path=str(path), **TINY)
    data = make_dataset(cfg)
    assert data.x_train.shape == (64, 6)
    result = train_task(TrainConfig(task="robustness", dataset_path=str(path),
                                    **{**TINY, "epochs": 1}))
    assert result.records[-1].clean_acc is not None
    with pytest.raises(ContractError, match="dim"):
        make_dataset(TrainConfig(task="robustness", dataset_path=str(path),
                                 **{**TINY, "dim": 9}))
    bad = tmp_path / "bad.npz"
    np.savez(bad, x_train=np.zeros((4, 6)))
    with pytest.raises(ContractError, match="lacks"):
        load_packaged_dataset(bad)
