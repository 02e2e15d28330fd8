import csv
import math

import numpy as np
import pytest

import oracles
from conftest import EX_ONE, EX_THREE, EX_TWO, params_of, randomize, tiny_config
from lgcm import data
from lgcm.checkpoint import load_checkpoint
from lgcm.errors import ConfigError, DataError, NumericError
from lgcm.model import LGCM
from lgcm.tensor import Tensor
from lgcm.trainer import AdamW, TrainConfig, clip_grad_norm, evaluate_ppl, restore_best, train

TRAIN = [EX_TWO, EX_ONE, EX_THREE] * 3


def scalar_param(value, grad):
    p = Tensor(np.array([value]), requires_grad=True)
    p.grad = np.array([grad])
    return p


class TestAdamW:
    def test_single_step_by_hand(self):
        p = scalar_param(1.0, 0.5)
        AdamW({"p": p}, lr=0.1, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01).step()
        # m = 0.05, v = 0.00025; bias-corrected m = 0.5, v = 0.25
        expected = 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (math.sqrt(0.25) + 1e-8)
        assert p.data[0] == pytest.approx(expected, abs=1e-15)

    def test_two_steps_by_hand(self):
        p = scalar_param(1.0, 0.5)
        opt = AdamW({"p": p}, lr=0.1, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01)
        opt.step()
        after_one = p.data[0]
        p.grad = np.array([-0.25])
        opt.step()
        m = 0.9 * 0.05 + 0.1 * -0.25
        v = 0.999 * 0.00025 + 0.001 * 0.0625
        m_hat, v_hat = m / (1 - 0.9**2), v / (1 - 0.999**2)
        expected = after_one * (1 - 0.001) - 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8)
        assert p.data[0] == pytest.approx(expected, abs=1e-15)
        assert opt.t == 2

    def test_decay_is_decoupled_from_gradient(self):
        p = scalar_param(2.0, 0.0)
        AdamW({"p": p}, lr=0.1, weight_decay=0.5).step()
        assert p.data[0] == pytest.approx(2.0 * (1 - 0.05), abs=1e-15)

    def test_state_round_trip(self):
        p = scalar_param(1.0, 0.5)
        opt = AdamW({"p": p}, lr=0.1)
        opt.step()
        other = AdamW({"p": scalar_param(1.0, 0.5)}, lr=0.1)
        other.load_state(opt.state())
        assert other.t == 1 and other.m["p"][0] == opt.m["p"][0] and other.v["p"][0] == opt.v["p"][0]


def test_clipping_preserves_direction():
    rng = np.random.default_rng(0)
    params = [scalar_param(0.0, 0.0) for _ in range(3)]
    for p in params:
        p.grad = rng.normal(size=4) * 10
    before = np.concatenate([p.grad for p in params])
    norm = clip_grad_norm(params, 1.0)
    after = np.concatenate([p.grad for p in params])
    assert norm == pytest.approx(np.linalg.norm(before))
    assert np.linalg.norm(after) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(after * norm, before, rtol=1e-12)


def test_clipping_leaves_small_gradients():
    p = scalar_param(0.0, 0.3)
    clip_grad_norm([p], 1.0)
    assert p.grad[0] == 0.3


class TestPerplexity:
    def test_uniform_logits_give_vocab_size(self):
        model = LGCM(tiny_config())
        model.embeddings.token.data[:] = 0.0
        assert abs(evaluate_ppl(model, TRAIN) - 12) <= 1e-9

    def test_independent_of_batch_size(self):
        model = randomize(LGCM(tiny_config()), seed=1)
        assert abs(evaluate_ppl(model, TRAIN, batch_size=1) - evaluate_ppl(model, TRAIN, batch_size=8)) <= 1e-9

    def test_two_example_hand_dataset(self):
        cfg = tiny_config()
        model = randomize(LGCM(cfg), seed=2)
        p = params_of(model)
        pair = [EX_TWO, EX_ONE]
        total = oracles.response_nll(EX_TWO, p, cfg) + oracles.response_nll(EX_ONE, p, cfg)
        count = (len(EX_TWO.response) - 1) + (len(EX_ONE.response) - 1)
        assert evaluate_ppl(model, pair) == pytest.approx(math.exp(total / count), rel=1e-12)

    def test_empty_dataset(self):
        with pytest.raises(DataError):
            evaluate_ppl(LGCM(tiny_config()), [])


class TestTrain:
    def test_zero_lr_leaves_parameters(self):
        model = randomize(LGCM(tiny_config()), seed=3)
        before = {k: v.copy() for k, v in params_of(model).items()}
        train(model, TRAIN, TRAIN, TrainConfig(lr=0.0, batch_size=4, max_steps=6, eval_interval=3))
        for name, value in params_of(model).items():
            np.testing.assert_array_equal(value, before[name])

    def test_loss_falls_and_best_is_selected(self, tmp_path):
        model = LGCM(tiny_config(d=16, heads=2))
        cfg = TrainConfig(lr=3e-3, batch_size=4, max_steps=40, eval_interval=10, seed=1)
        result = train(model, TRAIN, TRAIN, cfg, out_dir=tmp_path)
        ppls = [row["valid_ppl"] for row in result.log]
        assert [row["step"] for row in result.log] == [10, 20, 30, 40]
        assert result.best.valid_ppl == min(ppls) and ppls[-1] < ppls[0]
        with open(tmp_path / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["step"]) for r in rows] == [10, 20, 30, 40]
        assert [float(r["valid_ppl"]) for r in rows] == ppls
        saved = load_checkpoint(tmp_path / "best.npz")
        assert saved.step == result.best.step and saved.valid_ppl == result.best.valid_ppl
        restore_best(model, result)
        assert evaluate_ppl(model, TRAIN, batch_size=4) == pytest.approx(result.best.valid_ppl, rel=1e-12)

    def test_same_seed_same_parameters(self):
        cfg = TrainConfig(lr=1e-3, batch_size=4, max_steps=8, eval_interval=4, seed=5)
        runs = []
        for _ in range(2):
            model = LGCM(tiny_config())
            result = train(model, TRAIN, TRAIN, cfg)
            runs.append((params_of(model), result.log))
        assert runs[0][1] == runs[1][1]
        for name, value in runs[0][0].items():
            np.testing.assert_array_equal(value, runs[1][0][name])

    def test_data_seed_changes_order(self):
        logs = []
        for seed in (0, 1):
            model = LGCM(tiny_config())
            logs.append(train(model, TRAIN, TRAIN, TrainConfig(lr=1e-3, batch_size=2, max_steps=3,
                                                                eval_interval=3, seed=seed)).log)
        assert logs[0] != logs[1]

    def test_nan_loss_aborts(self):
        model = LGCM(tiny_config())
        model.embeddings.role.data[:] = np.nan
        with pytest.raises(NumericError, match="step 1"):
            train(model, TRAIN, TRAIN, TrainConfig(max_steps=2))

    def test_empty_split(self):
        with pytest.raises(DataError):
            train(LGCM(tiny_config()), [], TRAIN, TrainConfig(max_steps=1))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr=-1.0)
        with pytest.raises(ConfigError):
            TrainConfig(clip_norm=0.0)

    def test_warmup_ramps_learning_rate(self):
        base = LGCM(tiny_config())
        warm = LGCM(tiny_config())
        train(base, TRAIN, TRAIN, TrainConfig(lr=1e-2, batch_size=4, max_steps=1))
        train(warm, TRAIN, TRAIN, TrainConfig(lr=1e-2, batch_size=4, max_steps=1, warmup_steps=4))
        init = params_of(LGCM(tiny_config()))
        moved_base = sum(np.abs(v - init[k]).sum() for k, v in params_of(base).items())
        moved_warm = sum(np.abs(v - init[k]).sum() for k, v in params_of(warm).items())
        assert 0 < moved_warm < moved_base
