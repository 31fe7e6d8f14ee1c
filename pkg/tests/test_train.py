import math

import numpy as np
import pytest

from rdlkit.errors import ConfigError, EmptyTrainSplit
from rdlkit.graph import build_graph
from rdlkit.models import load_checkpoint
from rdlkit.synth import SynthSpec, generate
from rdlkit.tasks import TEST, TRAIN, VAL, TaskSpec, prepare_task
from rdlkit.train import RunConfig, evaluate, train

SMALL = dict(batch_size=32, min_epochs=2, min_steps=5, patience=1, max_extra_epochs=2,
             grid_fanouts=(4,), grid_layers=(1, 2), d=8, d0=8, head_hidden=8)


def binary_task(seed=0, temporal=False, rows=120):
    inst, _ = generate(SynthSpec(n_tables=3, rows=rows, table_rows={"t0": 20, "t1": 30}, signal="target_one_hop",
                                 temporal=temporal, seed=seed))
    spec = TaskSpec("binary_classification", "t2", "label", temporal=temporal)
    return prepare_task(inst, spec)


def test_grid_and_config_validation():
    assert RunConfig(variant="tabular_only").grid() == [(None, 0)]
    assert len(RunConfig().grid()) == 12
    with pytest.raises(ConfigError):
        RunConfig(batch_size=0)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"learning_rate": 1.0})
    with pytest.raises(ConfigError):
        RunConfig(grid_layers=())


def test_train_report_and_checkpoint_meta():
    mod, tt = binary_task()
    report, model, ckpt = train(mod, tt, RunConfig(**SMALL))
    assert report.metric == "auc_roc"
    assert len(report.grid) == 2
    assert report.best in ({"fanout": 4, "n_layers": 1}, {"fanout": 4, "n_layers": 2})
    assert report.epochs >= 2 and report.steps >= 5
    assert 0.0 <= report.test <= 1.0
    back, meta = load_checkpoint(ckpt)
    assert meta["selected"] == report.best
    assert meta["run_config"] == RunConfig(**SMALL).to_dict()
    again = evaluate(back, mod, tt, RunConfig(**SMALL))
    assert again["val"] == report.val
    assert again["test"] == report.test


def test_two_runs_are_identical():
    mod, tt = binary_task(seed=3)
    a = train(mod, tt, RunConfig(**SMALL))
    b = train(mod, tt, RunConfig(**SMALL))
    assert a[2] == b[2]
    assert a[0].to_dict(timing=False) == b[0].to_dict(timing=False)


def test_test_labels_do_not_steer_selection():
    mod, tt = binary_task(seed=5)
    base, _, _ = train(mod, tt, RunConfig(**SMALL))
    flipped = tt.labels[:]
    for i in np.flatnonzero(tt.split == TEST):
        flipped[i] = 1 - flipped[i]
    tt.labels = flipped
    swapped, _, _ = train(mod, tt, RunConfig(**SMALL))
    assert swapped.best == base.best
    assert swapped.val == base.val
    assert [g["val"] for g in swapped.grid] == [g["val"] for g in base.grid]
    assert swapped.test == pytest.approx(1.0 - base.test, abs=1e-12)


def test_rows_after_every_seed_time_cannot_matter():
    mod, tt = binary_task(seed=7, temporal=True)
    cfg = RunConfig(**SMALL)
    latest = float(np.max(tt.timestamps))
    tdef = mod.schema.table("t1")
    j, k = tdef.index("ts"), tdef.index("num_0")
    rows = mod.tables["t1"].rows
    # move one t1 row past every seed time, then poison it
    r = list(rows[0])
    r[j] = int(latest) + 10**6
    rows[0] = tuple(r)
    first, _, ck1 = train(mod, tt, cfg)
    r[k] = 1e12
    rows[0] = tuple(r)
    second, _, ck2 = train(mod, tt, cfg)
    assert ck1 == ck2
    assert first.to_dict(timing=False) == second.to_dict(timing=False)


def test_multiclass_regression_and_mask_runs():
    inst, _ = generate(SynthSpec(n_tables=2, rows=80, columns={"numerical": 2, "categorical": 2}, seed=1))
    mod, tt = prepare_task(inst, TaskSpec("multiclass_classification", "t1", "cat_1"))
    rep, _, _ = train(mod, tt, RunConfig(**SMALL))
    assert rep.metric == "macro_f1" and 0 <= rep.test <= 1
    mod, tt = prepare_task(inst, TaskSpec("regression", "t1", "num_1"))
    rep, _, _ = train(mod, tt, RunConfig(**{**SMALL, "variant": "resnet_sage"}))
    assert rep.metric == "r2_clipped" and 0 <= rep.test <= 1
    mod, tt = prepare_task(inst, TaskSpec("mask_pretrain", "t1", mask_rate=0.3))
    rep, _, _ = train(mod, tt, RunConfig(**{**SMALL, "variant": "tabular_only"}))
    assert rep.metric == "loss_reduction"
    assert set(rep.extra) == {"initial_train_loss", "final_train_loss"}
    assert rep.grid[0]["n_layers"] == 0


def test_no_training_rows():
    mod, tt = binary_task()
    tt.split[:] = VAL
    with pytest.raises(EmptyTrainSplit):
        train(mod, tt, RunConfig(**SMALL))


def test_evaluate_without_test_rows_gives_nan():
    mod, tt = binary_task()
    _, model, _ = train(mod, tt, RunConfig(**SMALL))
    tt.split[tt.split == TEST] = TRAIN
    out = evaluate(model, mod, tt, RunConfig(**SMALL), build_graph(mod))
    assert math.isnan(out["test"])
