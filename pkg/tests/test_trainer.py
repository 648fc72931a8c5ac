import math

import numpy as np
import pytest
import torch

from conftest import tiny_model_config, tiny_train_config
from promptclr.corpus import FewShotSplit, make_fewshot_splits
from promptclr.encoder import init_params
from promptclr.errors import ConfigurationError, DivergenceError
from promptclr.losses import ContrastiveBatch
from promptclr.prompting import build_view_pair, label_word_ids
from promptclr.trainer import (Adam, StepRecord, TrainConfig, TrainLog, build_view1,
                               optimizer_step, train, train_iteration, _slot_rng)


def make_split(inputs, k=4, seed=5):
    return make_fewshot_splits(inputs.examples, inputs.task, k, (seed,))[0]


def run(inputs, split, **kw):
    config = tiny_train_config(**kw)
    params = init_params(tiny_model_config(len(inputs.vocab)), seed=config.seed)
    return train(params, split, inputs.bank, inputs.verbalizer, inputs.vocab,
                 config, inputs.lexicon)


def test_train_config_validation():
    tiny_train_config(loss_mode="none", batch_size=1)
    tiny_train_config(lr_supcon=0.0)
    for bad in (dict(loss_mode="x"), dict(step_mode="x"), dict(view_strategy="x"),
                dict(representation_mode="x"), dict(augment_op="x"),
                dict(max_steps=0), dict(batch_size=0), dict(lr_mlm=0.0),
                dict(lr_supcon=-1e-4), dict(temperature=0.0),
                dict(loss_mode="supcon", batch_size=1), dict(augment_alpha=1.5)):
        with pytest.raises(ConfigurationError):
            tiny_train_config(**bad)


def test_adam_constant_gradient_closed_form():
    # with a constant gradient g, bias-corrected m and v are exactly g and g^2,
    # so every update is -lr * g / (|g| + eps)
    p = torch.nn.Parameter(torch.tensor([1.0, -2.0], dtype=torch.float64))
    opt = Adam([p])
    g = torch.tensor([0.5, -0.25], dtype=torch.float64)
    steps, lr = 4, 0.1
    for _ in range(steps):
        p.grad = g.clone()
        opt.step(lr)
    expected = torch.tensor([1.0, -2.0], dtype=torch.float64) \
        - steps * lr * g / (g.abs() + 1e-8)
    assert torch.allclose(p.data, expected, atol=1e-12)
    assert opt.counts == [steps]


def test_adam_zero_lr_is_complete_noop():
    p = torch.nn.Parameter(torch.tensor([1.0, 2.0]))
    opt = Adam([p])
    p.grad = torch.tensor([0.3, -0.3])
    before = p.data.clone()
    opt.step(0.0)
    assert torch.equal(p.data, before)
    assert opt.counts == [0]
    assert float(opt.m[0].abs().sum()) == 0.0
    assert float(opt.v[0].abs().sum()) == 0.0


def test_adam_skips_missing_grads_and_frozen_params():
    p = torch.nn.Parameter(torch.tensor([1.0]))
    q = torch.nn.Parameter(torch.tensor([1.0]))
    frozen = torch.nn.Parameter(torch.tensor([1.0]), requires_grad=False)
    opt = Adam([p, q, frozen])
    assert len(opt.params) == 2
    p.grad = torch.tensor([0.5])
    opt.step(0.1)
    assert opt.counts == [1, 0]
    assert float(q.data) == 1.0


def test_adam_rejects_nonfinite_gradient():
    p = torch.nn.Parameter(torch.tensor([1.0]))
    opt = Adam([p])
    p.grad = torch.tensor([float("nan")])
    with pytest.raises(ValueError):
        opt.step(0.1)
    p.grad = torch.tensor([float("inf")])
    with pytest.raises(ValueError):
        optimizer_step(opt, 0.1)


def test_adam_first_step_magnitude_bounded():
    p = torch.nn.Parameter(torch.tensor([0.0, 0.0, 0.0]))
    opt = Adam([p])
    p.grad = torch.tensor([5.0, -0.01, 1e-6])
    opt.step(0.1)
    assert float(p.data.abs().max()) <= 0.1 * (1 + 1e-6)


def test_adam_update_preserves_retained_graph():
    # the two-pass schedule backprops a graph built before the MLM step;
    # p.data updates must not bump the autograd version counter
    p = torch.nn.Parameter(torch.tensor([1.0, 2.0]))
    opt = Adam([p])
    h = p * 3.0
    first = h.sum()
    first.backward(retain_graph=True)
    opt.step(0.1)
    opt.zero_grad()
    second = (h * h).sum()
    second.backward()  # would raise if the step bumped p's version
    assert torch.isfinite(p.grad).all()


def test_slot_rng_streams_are_stable_and_distinct():
    a = _slot_rng(13, 5, 1).integers(1 << 30, size=4)
    b = _slot_rng(13, 5, 1).integers(1 << 30, size=4)
    c = _slot_rng(13, 5, 2).integers(1 << 30, size=4)
    d = _slot_rng(13, 6, 1).integers(1 << 30, size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_build_view1_matches_view_pair_view1(tiny_inputs):
    # the MLM-only input stream is identical to the contrastive one's view 1
    split = make_split(tiny_inputs)
    ex = split.train[0]
    for slot in range(4):
        rng_a = _slot_rng(13, 3, slot + 1)
        rng_b = _slot_rng(13, 3, slot + 1)
        v1 = build_view1(ex, tiny_inputs.bank, split.train, tiny_inputs.verbalizer,
                         tiny_inputs.vocab, rng_a)
        pair = build_view_pair(ex, tiny_inputs.bank, split.train, "demo_and_temp",
                               tiny_inputs.verbalizer, tiny_inputs.vocab, rng_b)
        assert v1 == pair.view1


def test_zero_contrastive_rate_equals_mlm_only(tiny_inputs):
    split = make_split(tiny_inputs)
    params_none, log_none = run(tiny_inputs, split, loss_mode="none", max_steps=6)
    params_zero, log_zero = run(tiny_inputs, split, loss_mode="supcon",
                                lr_supcon=0.0, max_steps=6)
    a, b = params_none.state_dict(), params_zero.state_dict()
    for key in a:
        assert torch.equal(a[key], b[key]), key
    assert log_none.mlm_losses() == log_zero.mlm_losses()
    assert all(v is None for v in log_none.contrastive_losses())
    assert all(v is not None for v in log_zero.contrastive_losses())


def test_supcon_step_changes_parameters(tiny_inputs):
    split = make_split(tiny_inputs)
    params_none, _ = run(tiny_inputs, split, loss_mode="none", max_steps=4)
    params_sc, _ = run(tiny_inputs, split, loss_mode="supcon", max_steps=4)
    a, b = params_none.state_dict(), params_sc.state_dict()
    assert any(not torch.equal(a[k], b[k]) for k in a)


def test_sequential_and_joint_modes_differ(tiny_inputs):
    split = make_split(tiny_inputs)
    params_seq, log_seq = run(tiny_inputs, split, step_mode="sequential", max_steps=4)
    params_joint, log_joint = run(tiny_inputs, split, step_mode="joint", max_steps=4)
    a, b = params_seq.state_dict(), params_joint.state_dict()
    assert any(not torch.equal(a[k], b[k]) for k in a)
    assert all(r.forward_count == 2 and r.backward_count == 2
               for r in log_seq.records)
    assert all(r.forward_count == 1 and r.backward_count == 1
               for r in log_joint.records)


def test_pass_accounting_per_mode(tiny_inputs):
    split = make_split(tiny_inputs)
    for mode, fw, bw in (("none", 1, 1), ("supcon", 2, 2), ("simclr", 2, 2)):
        _, log = run(tiny_inputs, split, loss_mode=mode, max_steps=3)
        assert [r.forward_count for r in log.records] == [fw] * 3
        assert [r.backward_count for r in log.records] == [bw] * 3
        assert [r.step for r in log.records] == [1, 2, 3]


def test_training_is_deterministic(tiny_inputs):
    split = make_split(tiny_inputs)
    params_a, log_a = run(tiny_inputs, split, max_steps=4)
    params_b, log_b = run(tiny_inputs, split, max_steps=4)
    a, b = params_a.state_dict(), params_b.state_dict()
    for key in a:
        assert torch.equal(a[key], b[key]), key
    assert log_a.mlm_losses() == log_b.mlm_losses()
    assert log_a.contrastive_losses() == log_b.contrastive_losses()


def test_mlm_loss_decreases(tiny_inputs):
    split = make_split(tiny_inputs, k=8)
    _, log = run(tiny_inputs, split, loss_mode="none", max_steps=200,
                 batch_size=8, lr_mlm=2e-3)
    losses = log.mlm_losses()
    # fully separable synthetic task: 0.70 -> 0.006 in this configuration
    assert np.mean(losses[-10:]) < np.mean(losses[:10]) - 0.3


def test_augmented_views_train(tiny_inputs):
    split = make_split(tiny_inputs)
    _, log = run(tiny_inputs, split, augment_op="eda", augment_alpha=0.2, max_steps=3)
    assert len(log) == 3
    with pytest.raises(ConfigurationError):
        config = tiny_train_config(augment_op="sr")
        params = init_params(tiny_model_config(len(tiny_inputs.vocab)), seed=0)
        train(params, split, tiny_inputs.bank, tiny_inputs.verbalizer,
              tiny_inputs.vocab, config, lexicon=None)


def test_empty_split_rejected(tiny_inputs):
    empty = FewShotSplit(train=(), test=(), seed=0, k=1)
    params = init_params(tiny_model_config(len(tiny_inputs.vocab)), seed=0)
    with pytest.raises(ValueError):
        train(params, empty, tiny_inputs.bank, tiny_inputs.verbalizer,
              tiny_inputs.vocab, tiny_train_config())


def test_divergence_raises_with_step_index(tiny_inputs):
    split = make_split(tiny_inputs)
    config = tiny_train_config(loss_mode="none", max_steps=3)
    params = init_params(tiny_model_config(len(tiny_inputs.vocab)), seed=0)
    # saturate the head so some gold label-word probability underflows to 0
    with torch.no_grad():
        params.head.mul_(1e12)
    with pytest.raises(DivergenceError) as err:
        train(params, split, tiny_inputs.bank, tiny_inputs.verbalizer,
              tiny_inputs.vocab, config, tiny_inputs.lexicon)
    assert err.value.step >= 1
    assert "mlm" in str(err.value)


def test_train_iteration_contrastive_batch_temperature(tiny_inputs, monkeypatch):
    split = make_split(tiny_inputs)
    config = tiny_train_config(temperature=0.7, max_steps=1)
    params = init_params(tiny_model_config(len(tiny_inputs.vocab)), seed=0)
    opt = Adam(params.parameters())
    ids = label_word_ids(tiny_inputs.verbalizer, tiny_inputs.vocab)
    seen = {}
    original = ContrastiveBatch.from_views.__func__

    def spy(cls, v1, v2, labels, temperature=0.1):
        seen["temperature"] = temperature
        return original(cls, v1, v2, labels, temperature)

    monkeypatch.setattr(ContrastiveBatch, "from_views", classmethod(spy))
    record = train_iteration(params, list(split.train[:4]), tiny_inputs.bank,
                             tiny_inputs.verbalizer, tiny_inputs.vocab, ids,
                             config, opt, 1, split.train, tiny_inputs.lexicon)
    assert seen["temperature"] == 0.7
    assert record.contrastive_loss is not None
    assert record.wall_time > 0


def test_train_log_append_and_thinning(tmp_path):
    log = TrainLog()
    for step in range(1, 11):
        log.append(StepRecord(step=step, mlm_loss=float(step),
                              contrastive_loss=0.5 if step % 2 else None,
                              forward_count=2, backward_count=2, wall_time=0.01))
    with pytest.raises(ValueError):
        log.append(StepRecord(step=12, mlm_loss=0.0, contrastive_loss=None,
                              forward_count=1, backward_count=1, wall_time=0.0))
    path = tmp_path / "trainlog.jsonl"
    log.save(path, every=4)
    thinned = TrainLog.load(path)
    assert [r.step for r in thinned.records] == [4, 8, 10]  # final step always kept
    log.save(path)
    full = TrainLog.load(path)
    assert full.records == log.records
    assert full.records[1].contrastive_loss is None
    assert full.mlm_losses() == log.mlm_losses()
