import math

import numpy as np
import pytest
import torch

from lcvn.config import UniConfig
from lcvn.datagen.instructions import MAX_TOKENS
from lcvn.datagen.world import Action
from lcvn.errors import BudgetError, ShapeError, TokenizerError
from lcvn.tokenizers import vq
from lcvn.tokenizers.bins import action_to_bins
from lcvn.tokenizers.space import TokenSpace
from lcvn.uni.inference import uni_imagine, uni_infer_step, uni_rollout
from lcvn.uni.losses import imagine_loss, joint_loss, plan_loss, restricted_log_softmax
from lcvn.uni.model import UniTransformer
from lcvn.uni.sequence import SCAFFOLD, budget_components, build_sample, check_budget, encode_frames, prompt_tokens
from lcvn.uni.trainer import UniTrainer, batch_losses, collate_sequences, uni_train_step

# File: tests/test_uni.py


@pytest.fixture(scope="module")
def codebook(train_trajs):
    obs = np.concatenate([t.observations for t in train_trajs])
    return vq.train_codebook(obs, K=4, seed=0)


@pytest.fixture(scope="module")
def space():
    return TokenSpace(codebook_size=4)


@pytest.fixture
def cfg():
    return UniConfig(depth=1, width=16, heads=2, codebook_size=4, batch_size=2, steps=2, warmup_steps=1)


def test_budget_components_sum(cfg):
    m = 4
    total = check_budget(cfg, m)
    assert total == sum(count for _, count in budget_components(cfg, m))
    assert total == len(SCAFFOLD) + MAX_TOKENS + m + cfg.context_size * m + 3 + (1 + 3 + 1 + m)


def test_budget_names_overflowing_component():
    cfg = UniConfig(context_size=8, budget=100)
    with pytest.raises(BudgetError, match="history"):
        check_budget(cfg, 16)


def test_prompt_layout(space):
    start = [0, 1, 2, 3]
    prompt = prompt_tokens(space, [4, 5], start, [start], Action(0.1, 0.0, 0.0), k=2)
    c = space.control
    assert prompt[:3] == [c("<bos>"), c("<task>"), c("<instr>")]
    assert [space.modality(t) for t in prompt[3:5]] == ["text", "text"]
    assert prompt[5] == c("<start_obs>")
    assert prompt[6:10] == [space.visual_token(x) for x in start]
    assert prompt[10] == c("<cur_obs>")
    # single history frame is left-padded to k frames
    assert prompt[11:19] == [space.visual_token(x) for x in start] * 2
    assert prompt[19] == c("<cur_action>")
    assert tuple(prompt[20:23]) == action_to_bins(Action(0.1, 0.0, 0.0), space.bins)
    assert prompt[-1] == c("<pred_action>")
    with pytest.raises(ShapeError):
        prompt_tokens(space, [], start, [], Action(), k=2)


def test_build_sample_moving_step(train_trajs, space, codebook, cfg):
    traj = train_trajs[0]
    s = build_sample(traj, 0, "concise", space, codebook, cfg)
    c = space.control
    assert not s.is_stop
    assert len(s.action_targets) == 3
    assert len(s.obs_targets) == codebook.tokens_per_frame
    assert [int(s.tokens[p]) for p in s.text_targets] == [c("<move>"), c("<pred_obs>")]
    assert s.prompt_length == s.text_targets[0]
    assert int(s.tokens[s.prompt_length - 1]) == c("<pred_action>")
    assert all(s.modalities[p] == "visual" for p in s.obs_targets)
    expected = vq.vq_encode(traj.observations[1], codebook)
    assert [space.visual_code(int(s.tokens[p])) for p in s.obs_targets] == expected.tolist()
    assert s.next_patches.shape == (codebook.tokens_per_frame, codebook.dim)


def test_build_sample_stop_step(train_trajs, space, codebook, cfg):
    traj = train_trajs[0]
    s = build_sample(traj, traj.n - 1, "landmark", space, codebook, cfg)
    assert s.is_stop
    assert int(s.tokens[-1]) == space.stop_token
    assert s.text_targets == () and s.obs_targets == ()
    assert s.next_patches is None
    with pytest.raises(ShapeError):
        build_sample(traj, traj.n, "concise", space, codebook, cfg)


def test_build_sample_without_language(train_trajs, space, codebook, cfg):
    cfg.use_language = False
    s = build_sample(train_trajs[0], 0, "concise", space, codebook, cfg)
    assert "text" not in s.modalities[: s.prompt_length]


def test_restricted_log_softmax_normalised():
    logits = torch.randn(2, 10)
    logp = restricted_log_softmax(logits, range(3, 7))
    assert logp.shape == (2, 4)
    assert torch.allclose(logp.exp().sum(-1), torch.ones(2))


def test_plan_loss_uniform_logits(space):
    dx_token = space.token_starts["dx"] + 50
    dy_token = space.token_starts["dy"] + 50
    logits = torch.zeros(2, space.vocab_size)
    loss = plan_loss(logits, torch.tensor([dx_token, dy_token]), logits[:0], torch.zeros(0, dtype=torch.long), space)
    assert float(loss) == pytest.approx(math.log(space.bins.bins_per_dim))

    stop = plan_loss(logits[:1], torch.tensor([space.stop_token]), logits[:1], torch.tensor([space.control("<move>")]), space)
    assert float(stop) == pytest.approx(2 * math.log(space.vocab_size))


def test_plan_loss_groups_average_per_sample(space):
    logits = torch.zeros(4, space.vocab_size)
    tokens = torch.tensor([space.token_starts["dx"], space.token_starts["dy"], space.token_starts["dyaw"], space.stop_token])
    groups = torch.tensor([0, 0, 0, 1])
    loss = plan_loss(logits, tokens, logits[:0], torch.zeros(0, dtype=torch.long), space, groups=groups)
    expected = 0.5 * (math.log(space.bins.bins_per_dim) + math.log(space.vocab_size))
    assert float(loss) == pytest.approx(expected)


def test_plan_loss_rejects_non_action_targets(space):
    logits = torch.zeros(1, space.vocab_size)
    with pytest.raises(TokenizerError):
        plan_loss(logits, torch.tensor([space.visual_token(0)]), logits[:0], torch.zeros(0, dtype=torch.long), space)


def test_imagine_loss_with_confident_logits(space, codebook):
    patches = torch.rand(1, 4, codebook.dim, dtype=torch.float64)
    logits = torch.full((1, 4, space.vocab_size), -1e4, dtype=torch.float64)
    logits[..., space.visual_token(2)] = 0.0
    entries = torch.from_numpy(codebook.entries)
    loss = imagine_loss(logits, patches, entries, space)
    expected = (patches - entries[2]).pow(2).sum(-1).mean()
    assert float(loss) == pytest.approx(float(expected))
    assert float(imagine_loss(logits[:0], patches[:0], entries, space)) == 0.0
    assert float(joint_loss(torch.tensor(1.0), torch.tensor(2.0), 0.5)) == 2.0


def test_collate_shifts_targets(train_trajs, space, codebook, cfg):
    traj = train_trajs[0]
    samples = [build_sample(traj, 0, "concise", space, codebook, cfg), build_sample(traj, traj.n - 1, "concise", space, codebook, cfg)]
    batch = collate_sequences(samples, space.control("<pad>"))
    assert batch.tokens.shape == (2, max(len(s) for s in samples))
    assert batch.action_rows.shape == (4, 2)
    assert batch.action_groups.tolist() == [0, 0, 0, 1]
    for (i, p), tok in zip(batch.action_rows.tolist(), batch.action_tokens.tolist()):
        assert int(batch.tokens[i, p + 1]) == tok
    assert batch.obs_rows.shape == (1, codebook.tokens_per_frame, 2)
    assert batch.patches.shape == (1, codebook.tokens_per_frame, codebook.dim)


@pytest.mark.parametrize("mode", ["joint", "interleave"])
def test_uni_train_step_modes(train_trajs, space, codebook, cfg, mode):
    cfg.mode = mode
    torch.manual_seed(0)
    model = UniTransformer.from_config(cfg, space.vocab_size)
    samples = [build_sample(train_trajs[0], t, "concise", space, codebook, cfg) for t in (0, 1)]
    batch = collate_sequences(samples, space.control("<pad>"))
    entries = torch.from_numpy(codebook.entries.astype(np.float32))
    losses = uni_train_step(model, torch.optim.SGD(model.parameters(), lr=1e-2), batch, space, entries, cfg)
    assert losses["loss"] == pytest.approx(losses["plan"] + cfg.lambda_joint * losses["imagine"], rel=1e-5)
    assert losses["imagine"] >= 0.0


def test_uni_trainer_keeps_codebook(train_trajs, space, codebook, cfg):
    model = UniTransformer.from_config(cfg, space.vocab_size)
    trainer = UniTrainer(model, space, codebook, cfg, train_trajs, seed=0)
    trainer.step()
    trainer.verify_tokenizers()
    assert trainer.step_count == 1
    assert len(trainer.steps) == sum(t.n for t in train_trajs)


def test_uni_infer_step_respects_ranges(train_trajs, space, codebook, cfg):
    torch.manual_seed(1)
    model = UniTransformer.from_config(cfg, space.vocab_size)
    start = vq.vq_encode(train_trajs[0].observations[0], codebook)
    prompt = prompt_tokens(space, [1, 2], start, [start], Action(0.0, 0.0, 0.0), cfg.context_size)
    action, codes, generated = uni_infer_step(model, space, prompt, codebook.tokens_per_frame)
    if action.is_stop:
        assert codes is None and generated == [space.stop_token]
    else:
        ranges = space.ranges()
        assert generated[0] == space.control("<move>")
        assert [space.modality(t) for t in generated[1:4]] == ["dx", "dy", "dyaw"]
        assert generated[4] == space.control("<pred_obs>")
        assert all(t in ranges["visual"] for t in generated[5:])
        assert codes.shape == (codebook.tokens_per_frame,)


def test_rollout_reads_only_the_start_observation(monkeypatch, train_trajs, space, codebook, cfg):
    calls = []
    real = vq.vq_encode

    def counting(obs, cb):
        calls.append(1)
        return real(obs, cb)

    monkeypatch.setattr(vq, "vq_encode", counting)
    model = UniTransformer.from_config(cfg, space.vocab_size)
    traj = train_trajs[0]
    rollout = uni_rollout(model, space, codebook, traj.observations[0], [1, 2], cfg, t_max=3, decode_observations=True)
    assert len(calls) == 1
    assert 1 <= len(rollout.actions) <= 3
    assert len(rollout.codes) == len(rollout.moves)
    assert len(rollout.observations) == len(rollout.codes)
    if rollout.stopped:
        assert rollout.actions[-1].is_stop


def test_uni_imagine_frames_per_action(train_trajs, space, codebook, cfg):
    model = UniTransformer.from_config(cfg, space.vocab_size)
    traj = train_trajs[0]
    frames = uni_imagine(model, space, codebook, traj.observations[0], [1], traj.actions, cfg)
    assert len(frames) == traj.n
    assert np.array_equal(frames[-1], frames[-2])
    assert all(f.shape == (codebook.tokens_per_frame,) for f in frames)


def test_encode_frames_shape(train_trajs, codebook):
    traj = train_trajs[0]
    assert encode_frames(traj, codebook).shape == (traj.n + 1, codebook.tokens_per_frame)


def test_imagine_loss_uniform_two_entry_codebook():
    space = TokenSpace(codebook_size=2)
    entries = torch.tensor([[0.0, 1.0, 2.0], [1.0, -1.0, 0.5]], dtype=torch.float64)
    logits = torch.zeros(1, 1, space.vocab_size, dtype=torch.float64)
    patch = entries[0].reshape(1, 1, 3)
    expected = 0.5 * float((entries[0] - entries[1]).pow(2).sum())
    assert float(imagine_loss(logits, patch, entries, space)) == pytest.approx(expected, abs=1e-12)


def test_joint_loss_gradient(train_trajs, space, codebook, cfg, param_gradcheck):
    torch.manual_seed(2)
    model = UniTransformer.from_config(cfg, space.vocab_size).double()
    traj = train_trajs[0]
    samples = [build_sample(traj, t, "concise", space, codebook, cfg) for t in (0, traj.n - 1)]
    batch = collate_sequences(samples, space.control("<pad>"))
    batch.patches = batch.patches.double()
    entries = torch.from_numpy(codebook.entries).double()
    assert param_gradcheck(model, lambda: batch_losses(model, batch, space, entries, 0.5)["loss"]) < 1e-4
