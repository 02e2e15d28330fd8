import math

import numpy as np
import pytest

import oracles
from conftest import EX_ONE, EX_THREE, EX_TWO, numeric_grad, params_of, randomize, rel_err, tiny_config
from lgcm import data
from lgcm.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from lgcm.config import LGCMConfig, Variant
from lgcm.errors import CheckpointError, ConfigError, ContractError
from lgcm.flops import count_flops, ffn_flops, gate_flops, local_self_attention_flops, self_attention_flops
from lgcm.model import LGCM, build_variant, expected_parameter_count, mean_nll
from lgcm.tensor import Tensor, backward

SMALL = data.TrainingExample(((1, 5, 2), (1, 7, 2)), (0, 1), (1, 8, 9, 2), 0)


class TestLoss:
    def test_uniform_logits_give_log_vocab(self, examples):
        model = LGCM(tiny_config())
        model.embeddings.token.data[:] = 0.0
        loss = model.forward_loss(data.collate(examples)).item()
        assert abs(loss - math.log(12)) <= 1e-12

    def test_confident_targets_drive_loss_to_zero(self):
        targets = np.array([[2, 0, 1]])
        logits = np.full((1, 3, 4), -50.0)
        logits[0, np.arange(3), targets[0]] = 50.0
        assert mean_nll(Tensor(logits), targets, np.ones((1, 3), bool)).item() < 1e-40

    def test_two_token_hand_batch(self):
        logits = np.array([[[1.0, 2.0, 0.0], [0.0, 0.0, 3.0], [9.0, 9.0, 9.0]]])
        targets = np.array([[1, 0, 2]])
        mask = np.array([[True, True, False]])
        first = -(2.0 - math.log(math.e + math.e**2 + 1.0))
        second = -(0.0 - math.log(2.0 + math.e**3))
        assert mean_nll(Tensor(logits), targets, mask).item() == pytest.approx((first + second) / 2, abs=1e-14)

    def test_matches_oracle_sum_over_examples(self, examples):
        cfg = tiny_config()
        model = randomize(LGCM(cfg), seed=2)
        p = params_of(model)
        batch = data.collate(examples)
        total = sum(oracles.response_nll(ex, p, cfg) for ex in examples)
        assert abs(model.nll(batch).item() - total) <= 1e-9
        assert abs(model.forward_loss(batch).item() - total / batch.num_targets) <= 1e-12

    def test_context_tokens_never_targets(self):
        model = randomize(LGCM(tiny_config()), seed=3)
        a = data.collate([SMALL])
        other = data.TrainingExample(((1, 4, 4, 2), (1, 11, 2)), (0, 1), SMALL.response, 0)
        b = data.collate([other])
        assert a.num_targets == b.num_targets == len(SMALL.response) - 1

    def test_zero_targets_is_an_error(self):
        batch = data.collate([SMALL])
        empty = data.Batch(**{**vars(batch), "response_mask": np.zeros_like(batch.response_mask)})
        with pytest.raises(ContractError):
            LGCM(tiny_config()).forward_loss(empty)


@pytest.mark.parametrize("variant", list(Variant))
def test_full_model_gradient_matches_fd(variant):
    model = randomize(LGCM(tiny_config(variant=variant)), seed=4, std=0.3)
    batch = data.collate([SMALL])
    backward(model.forward_loss(batch))
    rng = np.random.default_rng(5)
    analytic, numeric = [], []
    for name, p in model.named_parameters():
        idx = rng.choice(p.data.size, size=min(6, p.data.size), replace=False)
        fd = numeric_grad(lambda: model.forward_loss(batch).item(), p.data, indices=idx)
        analytic.append(p.grad.reshape(-1)[idx])
        numeric.append(fd.reshape(-1)[idx])
    assert rel_err(np.concatenate(analytic), np.concatenate(numeric)) <= 1e-3


class TestVariants:
    @pytest.mark.parametrize("variant", list(Variant))
    def test_parameter_count_matches_shape_arithmetic(self, variant):
        for kw in ({}, dict(d=16, heads=4, n_local=2, n_global=3, n_max=7)):
            cfg = tiny_config(variant=variant, **kw)
            assert build_variant(cfg).num_parameters() == expected_parameter_count(cfg)

    def test_gate_versus_ffn_delta_per_layer(self):
        d = 16
        for n_global in (1, 2, 3):
            cfg = tiny_config(d=d, heads=4, n_global=n_global)
            delta = (LGCM(cfg.replace(variant=Variant.NO_GATE)).num_parameters()
                     - LGCM(cfg).num_parameters())
            assert delta == n_global * ((8 * d * d + 5 * d) - (2 * d * d + d))

    def test_no_inter_attention_has_no_relative_table(self):
        names = [n for n, _ in LGCM(tiny_config(variant="NO_INTER_ATTENTION")).named_parameters()]
        assert not any("relative" in n for n in names)
        assert any("relative" in n for n, _ in LGCM(tiny_config()).named_parameters())

    def test_flat_baseline_depth(self):
        assert LGCMConfig.reference_scale(100).n_flat == 6
        model = LGCM(tiny_config(variant=Variant.FLAT_TRANSFORMER, n_local=3, n_global=3))
        assert len(model.flat_encoder) == 6

    def test_unknown_variant_tag(self):
        with pytest.raises(ConfigError):
            tiny_config(variant="NO_DECODER")

    def test_bad_head_split(self):
        with pytest.raises(ConfigError):
            tiny_config(d=10, heads=4)


class TestWholeModelInvariants:
    @pytest.mark.parametrize("variant", list(Variant))
    def test_padding_changes_no_real_output(self, variant):
        model = randomize(LGCM(tiny_config(variant=variant)), seed=6)
        solo = model.logits(data.collate([EX_ONE])).data[0]
        memory, pad = model.encode(data.collate([EX_ONE]))
        mixed = data.collate([EX_THREE, EX_ONE, EX_TWO])
        wide = model.logits(mixed).data[1]
        assert np.abs(wide[: solo.shape[0]] - solo).max() <= 1e-9
        wmemory, wpad = model.encode(mixed)
        assert np.abs(wmemory.data[1][~wpad[1]] - memory.data[0][~pad[0]]).max() <= 1e-9

    def swapped(self, ex):
        return data.TrainingExample(ex.context[::-1], ex.context_roles[::-1], ex.response, ex.response_role)

    def test_swap_permutes_states_without_structure_tables(self):
        model = randomize(LGCM(tiny_config(n_global=2)), seed=7)
        for layer in model.global_encoder.layers:
            layer.attention.relative_keys.data[:] = 0.0
        model.embeddings.utterance_position.data[:] = 0.0
        ex = data.TrainingExample(((1, 5, 6, 2), (1, 7, 8, 2)), (0, 1), (1, 9, 2), 0)
        m1, _ = model.encode(data.collate([ex]))
        m2, _ = model.encode(data.collate([self.swapped(ex)]))
        assert np.abs(m1.data[0, :4] - m2.data[0, 4:]).max() <= 1e-9
        assert np.abs(m1.data[0, 4:] - m2.data[0, :4]).max() <= 1e-9
        l1 = model.logits(data.collate([ex])).data
        l2 = model.logits(data.collate([self.swapped(ex)])).data
        assert np.abs(l1 - l2).max() <= 1e-9

    def test_swap_changes_outputs_with_relative_table(self):
        model = randomize(LGCM(tiny_config()), seed=8)
        model.embeddings.utterance_position.data[:] = 0.0
        ex = data.TrainingExample(((1, 5, 6, 2), (1, 7, 8, 2)), (0, 1), (1, 9, 2), 0)
        l1 = model.logits(data.collate([ex])).data
        l2 = model.logits(data.collate([self.swapped(ex)])).data
        assert np.abs(l1 - l2).max() > 1e-6

    def test_too_many_context_utterances(self):
        model = LGCM(tiny_config(n_max=1))
        with pytest.raises(IndexError):
            model.encode(data.collate([EX_TWO]))


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path, examples):
        model = randomize(LGCM(tiny_config()), seed=9)
        batch = data.collate(examples)
        before = model.logits(batch).data
        save_checkpoint(Checkpoint.from_model(model, step=7, valid_ppl=3.5), tmp_path / "m.npz")
        ckpt = load_checkpoint(tmp_path / "m.npz", expected_config=model.config)
        assert ckpt.step == 7 and ckpt.valid_ppl == 3.5
        for name, p in model.named_parameters():
            np.testing.assert_array_equal(ckpt.params[name], p.data)
        np.testing.assert_array_equal(ckpt.to_model().logits(batch).data, before)

    def test_optimizer_moments_survive(self, tmp_path):
        model = LGCM(tiny_config())
        m = {n: np.full(p.shape, 0.25) for n, p in model.named_parameters()}
        save_checkpoint(Checkpoint.from_model(model, optimizer={"t": 3, "lr": 1e-3, "m": m, "v": m}),
                        tmp_path / "m.npz")
        opt = load_checkpoint(tmp_path / "m.npz").optimizer
        assert opt["t"] == 3 and set(opt["m"]) == set(m)
        np.testing.assert_array_equal(opt["v"]["embeddings.token"], m["embeddings.token"])

    def test_wrong_width_is_a_config_error(self, tmp_path):
        model = LGCM(tiny_config())
        save_checkpoint(Checkpoint.from_model(model), tmp_path / "m.npz")
        with pytest.raises(ConfigError):
            load_checkpoint(tmp_path / "m.npz", expected_config=tiny_config(d=16))

    def test_version_mismatch(self, tmp_path, monkeypatch):
        import lgcm.checkpoint as ck

        monkeypatch.setattr(ck, "VERSION", 99)
        save_checkpoint(Checkpoint.from_model(LGCM(tiny_config())), tmp_path / "m.npz")
        monkeypatch.undo()
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(tmp_path / "m.npz")

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "m.npz"
        save_checkpoint(Checkpoint.from_model(LGCM(tiny_config())), path)
        path.write_bytes(path.read_bytes()[:200])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_parameter_shape_mismatch(self, tmp_path):
        ckpt = Checkpoint.from_model(LGCM(tiny_config()))
        ckpt.params["embeddings.role"] = np.zeros((3, 8))
        save_checkpoint(ckpt, tmp_path / "m.npz")
        with pytest.raises(ConfigError, match="embeddings.role"):
            load_checkpoint(tmp_path / "m.npz")


class TestFlops:
    def test_hand_evaluated_examples(self):
        L, d = 128, 512
        assert self_attention_flops(L, d) == 6 * 128 * 512**2 + 4 * 128**2 * 512 == 234_881_024
        report = count_flops(L_total=L, N=4, d=d, n_local=3, n_global=3)
        assert report.local_self_attention == 6 * 128 * 512**2 + (4 * 128**2 * 512) // 4 == 209_715_200
        assert report.gate == 4 * 128 * 512**2 == 134_217_728
        assert report.ffn == 16 * 128 * 512**2 == 536_870_912
        assert report.gate < report.ffn

    @pytest.mark.parametrize("L", [64, 128, 256])
    @pytest.mark.parametrize("d", [64, 512])
    @pytest.mark.parametrize("N", [1, 2, 4, 7])
    def test_closed_forms_on_grid(self, L, d, N):
        lengths = [L // N] * N
        lengths[-1] += L - sum(lengths)
        r = count_flops(lengths=lengths, d=d, n_local=3, n_global=3)
        assert r.flat_self_attention == 6 * L * d * d + 4 * L * L * d
        assert r.local_self_attention == sum(6 * n * d * d + 4 * n * n * d for n in lengths)
        assert r.ffn == 16 * L * d * d and r.gate == 4 * L * d * d
        assert r.lgcm_encoder == 3 * (r.local_self_attention + r.ffn) + 3 * (r.flat_self_attention + r.gate)
        if N == 1:
            assert r.local_self_attention == r.flat_self_attention
        else:
            assert r.lgcm_cheaper

    def test_equal_split_matches_closed_form(self):
        for N in (1, 2, 4):
            assert local_self_attention_flops([128 // N] * N, 512) == 6 * 128 * 512**2 + 4 * 128**2 * 512 // N

    def test_single_utterance_gap_is_gate_versus_ffn(self):
        r = count_flops(L_total=128, N=1, d=64, n_local=2, n_global=2)
        assert r.flat_encoder - r.lgcm_encoder == 2 * (r.ffn - r.gate)

    def test_exact_mode_adds_projection_and_bias(self):
        closed = count_flops(L_total=64, N=2, d=64, n_local=1, n_global=1)
        exact = count_flops(L_total=64, N=2, d=64, n_local=1, n_global=1, mode="exact")
        assert exact.flat_self_attention - closed.flat_self_attention == 2 * 64 * 64**2
        assert exact.inter_attention - closed.inter_attention == 2 * 64 * 64**2 + 2 * 64 * 2 * 64

    def test_reads_layer_counts_from_config(self):
        cfg = LGCMConfig.reference_scale(100)
        r = count_flops(cfg, L_total=128, N=4)
        assert (r.d, r.n_local, r.n_global) == (512, 3, 3)
        assert "verdict" in r.to_text() and r.to_csv().startswith("component,flops")

    def test_rejects_unequal_split_and_bad_mode(self):
        with pytest.raises(ValueError):
            count_flops(L_total=10, N=3, d=8, n_local=1, n_global=1)
        with pytest.raises(ValueError):
            count_flops(L_total=8, N=2, d=8, n_local=1, n_global=1, mode="rough")

    def test_ffn_and_gate_helpers(self):
        assert ffn_flops(1, 1) == 16 and gate_flops(1, 1) == 4
