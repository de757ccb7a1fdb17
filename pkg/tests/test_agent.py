import pytest
import torch

from lcvn.agent.inference import ModelCall, navigate
from lcvn.agent.model import ActorCritic
from lcvn.agent.networks import PolicyOutput, ema_update, make_target, policy_to_action
from lcvn.agent.objectives import (
    actor_loss,
    critic_loss,
    instruction_alignment_loss,
    intrinsic_reward,
    lambda_returns,
    lambda_returns_batched,
    same_instruction_mask,
)
from lcvn.agent.plans import PlanDistribution, kl_gaussians, standard_normal_like
from lcvn.agent.trainer import ActorCriticTrainer
from lcvn.errors import DatasetError, FrozenModelError, ShapeError
from lcvn.infra.checkpoint import FrozenGuard
from lcvn.worldmodel.codec import PixelCodec
from lcvn.worldmodel.model import WorldModel

# File: tests/test_agent.py


@pytest.mark.parametrize(
    "expert, imagined, expected",
    [
        ([1.0, 0.0], [1.0, 0.0], 1.0),
        ([1.0, 0.0], [-1.0, 0.0], -1.0),
        ([2.0, 0.0], [1.0, 0.0], 0.5),
        ([1.0, 0.0], [0.0, 1.0], 0.0),
        ([0.0, 0.0], [0.0, 0.0], 1.0),
        ([0.0, 0.0], [3.0, 4.0], 0.0),
    ],
)
def test_intrinsic_reward_cases(expert, imagined, expected):
    r = intrinsic_reward(torch.tensor(expert), torch.tensor(imagined))
    assert float(r) == pytest.approx(expected)


def test_intrinsic_reward_bounded():
    g = torch.Generator().manual_seed(0)
    a = torch.randn(256, 5, generator=g)
    b = torch.randn(256, 5, generator=g) * 3
    r = intrinsic_reward(a, b)
    assert torch.all(r <= 1.0) and torch.all(r >= -1.0)


def test_intrinsic_reward_gradient(gradcheck):
    expert = torch.tensor([1.0, -0.5, 0.25], dtype=torch.float64)
    x = torch.tensor([2.0, 1.5, -2.5], dtype=torch.float64, requires_grad=True)
    intrinsic_reward(expert, x).backward()

    def fn(v):
        return intrinsic_reward(expert, v)

    assert gradcheck(fn, x.detach(), x.grad) < 1e-6


def test_lambda_returns_by_hand():
    returns = lambda_returns([1.0, 0.0], [0.5, 0.2, 1.0], gamma=0.9, lam=0.5)
    assert returns.tolist() == pytest.approx([1.495, 0.9])


def test_lambda_returns_extremes():
    rewards = torch.tensor([0.3, 0.1, 0.7], dtype=torch.float64)
    values = torch.tensor([0.0, 0.4, 0.2, 0.9], dtype=torch.float64)
    # lambda = 0: one-step TD targets
    td = lambda_returns(rewards, values, gamma=0.5, lam=0.0)
    assert td.tolist() == pytest.approx((rewards + 0.5 * values[1:]).tolist())
    # lambda = 1: discounted Monte Carlo bootstrapped at the end
    mc = lambda_returns(rewards, values, gamma=0.5, lam=1.0)
    assert float(mc[0]) == pytest.approx(0.3 + 0.5 * 0.1 + 0.25 * 0.7 + 0.125 * 0.9)
    with pytest.raises(ShapeError):
        lambda_returns(rewards, values[:-1], gamma=0.5, lam=0.5)


def test_lambda_returns_batched_respects_lengths():
    rewards = torch.tensor([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]], dtype=torch.float64)
    values = torch.tensor([[0.0, 0.5, 0.5, 0.5], [0.0, 0.5, 0.5, 0.5]], dtype=torch.float64)
    out = lambda_returns_batched(rewards, values, 0.9, 0.8, torch.tensor([3, 1]))
    short = lambda_returns(rewards[1, :1], values[1, :2], 0.9, 0.8)
    full = lambda_returns(rewards[0], values[0], 0.9, 0.8)
    assert torch.allclose(out[0], full)
    assert float(out[1, 0]) == pytest.approx(float(short[0]))


def test_losses_respect_mask():
    values = torch.tensor([[1.0, 5.0]])
    returns = torch.tensor([[0.0, 0.0]])
    mask = torch.tensor([[True, False]])
    assert float(critic_loss(values, returns, mask)) == pytest.approx(0.5)
    loss = actor_loss(returns, torch.ones(1, 2), torch.ones(1, 2), alpha1=1.0, alpha2=0.1, mask=mask)
    assert float(loss) == pytest.approx(1.1)


def test_kl_gaussians():
    p = PlanDistribution(torch.ones(2, 3), torch.zeros(2, 3))
    assert torch.allclose(kl_gaussians(p, p), torch.zeros(2))
    assert torch.allclose(kl_gaussians(p, standard_normal_like(p)), torch.full((2,), 1.5))
    with pytest.raises(ShapeError):
        kl_gaussians(p, PlanDistribution(torch.zeros(2, 4), torch.zeros(2, 4)))


def test_alignment_loss():
    states = torch.eye(3)
    assert float(instruction_alignment_loss(states, states, margin=0.2)) == pytest.approx(0.0, abs=1e-6)
    flipped = instruction_alignment_loss(states, -states, margin=0.2)
    assert float(flipped) == pytest.approx(2.0)
    with pytest.raises(ShapeError):
        instruction_alignment_loss(states[:1], states[:1])


def test_policy_to_action_stop_threshold():
    mean = torch.tensor([[0.2, 0.0, 0.1]])
    out = PolicyOutput(mean=mean, logstd=torch.zeros(1, 3), stop_logit=torch.tensor([3.0]))
    assert policy_to_action(out).is_stop
    out = PolicyOutput(mean=mean, logstd=torch.zeros(1, 3), stop_logit=torch.tensor([-3.0]))
    action = policy_to_action(out)
    assert not action.is_stop
    assert action.dx == pytest.approx(0.2)


def test_ema_update():
    agent = ActorCritic(state_dim=4, instr_dim=4, plan_dim=2, hidden=8)
    target = make_target(agent.critic)
    with torch.no_grad():
        for p in agent.critic.parameters():
            p.add_(1.0)
    before = [p.clone() for p in target.parameters()]
    ema_update(target, agent.critic, tau=0.5)
    for old, new, src in zip(before, target.parameters(), agent.critic.parameters()):
        assert torch.allclose(new, 0.5 * old + 0.5 * src)
        assert not new.requires_grad


def test_frozen_guard_detects_changes():
    model = torch.nn.Linear(3, 3)
    guard = FrozenGuard(model, "linear")
    guard.verify()
    with torch.no_grad():
        model.weight.add_(1e-3)
    with pytest.raises(FrozenModelError):
        guard.verify()


def _wm_and_agent(state_dim=48):
    torch.manual_seed(0)
    wm = WorldModel(state_dim, context_size=2, width=16, depth=1, heads=2, instr_dim=16, levels=8)
    agent = ActorCritic(state_dim, 16, plan_dim=4, hidden=16, align_dim=4)
    return wm, agent


def _force_stop(agent, logit):
    with torch.no_grad():
        agent.actor.stop.weight.zero_()
        agent.actor.stop.bias.fill_(logit)


def test_navigate_call_log(train_trajs):
    wm, agent = _wm_and_agent()
    _force_stop(agent, -50.0)
    codec = PixelCodec(16, 4)
    traj = train_trajs[0]
    result = navigate(traj.observations[0], traj.instructions["concise"].tokens, codec, wm, agent, t_max=3, sampler_steps=2)
    assert not result.stopped
    assert len(result.actions) == 3
    assert result.calls == [
        ModelCall("actor", 0),
        ModelCall("wm", 1, consumes=0),
        ModelCall("actor", 1),
        ModelCall("wm", 2, consumes=1),
        ModelCall("actor", 2),
    ]
    assert result.latents.shape == (3, 48)


def test_navigate_stops_immediately(train_trajs):
    wm, agent = _wm_and_agent()
    _force_stop(agent, 50.0)
    traj = train_trajs[0]
    result = navigate(traj.observations[0], [], PixelCodec(16, 4), wm, agent, t_max=5, sampler_steps=2)
    assert result.stopped
    assert [a.is_stop for a in result.actions] == [True]
    assert result.moves == []
    assert result.calls == [ModelCall("actor", 0)]


def test_navigate_is_seeded(train_trajs):
    wm, agent = _wm_and_agent()
    _force_stop(agent, -50.0)
    traj = train_trajs[1]
    kwargs = dict(t_max=3, sampler_steps=2, seed=4)
    a = navigate(traj.observations[0], [1, 2], PixelCodec(16, 4), wm, agent, **kwargs)
    b = navigate(traj.observations[0], [1, 2], PixelCodec(16, 4), wm, agent, **kwargs)
    assert a.actions == b.actions


def test_actor_critic_trainer_keeps_world_model_frozen(tiny_config, train_trajs):
    codec = PixelCodec(16, tiny_config.wm.pixel_pool)
    wm = WorldModel.from_config(tiny_config.wm, codec.dim, step_size=0.3)
    agent = ActorCritic.from_config(tiny_config.ac, codec.dim, tiny_config.wm.instr_dim)
    trainer = ActorCriticTrainer(agent, wm, codec, tiny_config.ac, tiny_config.wm, train_trajs, seed=0)
    losses = trainer.step()
    for key in ("actor", "critic", "kl", "ins", "recon", "reward", "value"):
        assert key in losses
    assert -1.0 <= losses["reward"] <= 1.0
    assert losses["kl"] >= 0.0
    trainer.guard.verify()
    assert all(not p.requires_grad for p in wm.parameters())


def test_actor_critic_batch_draws_distinct_trajectories(tiny_config, train_trajs):
    codec = PixelCodec(16, tiny_config.wm.pixel_pool)
    wm = WorldModel.from_config(tiny_config.wm, codec.dim, step_size=0.3)
    agent = ActorCritic.from_config(tiny_config.ac, codec.dim, tiny_config.wm.instr_dim)
    tiny_config.ac.batch_size = len(train_trajs)
    trainer = ActorCriticTrainer(agent, wm, codec, tiny_config.ac, tiny_config.wm, train_trajs, seed=0)
    for _ in range(3):
        batch = trainer.sample_batch()
        rows = {tuple(row.flatten().tolist()) for row in batch.states}
        assert len(rows) == len(train_trajs)


def test_alignment_loss_skips_pairs_with_same_instruction():
    ids = torch.tensor([[4, 5, 0], [4, 5, 0], [7, 0, 0]])
    same = same_instruction_mask(ids)
    assert same.tolist() == [[True, True, False], [True, True, False], [False, False, True]]
    states = torch.tensor([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    # rows 0 and 1 share an instruction, so their cross cosine of 1 is not penalised
    assert float(instruction_alignment_loss(states, states, margin=0.2, same_instruction=same)) == pytest.approx(0.0, abs=1e-6)
    assert float(instruction_alignment_loss(states, states, margin=0.2)) == pytest.approx(0.8 * 2 / 6)
    everything = torch.ones(3, 3, dtype=torch.bool)
    assert float(instruction_alignment_loss(states, states, same_instruction=everything)) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ShapeError):
        instruction_alignment_loss(states, states, same_instruction=same[:2])


def test_actor_critic_trainer_needs_batch_of_two(tiny_config, train_trajs):
    codec = PixelCodec(16, 4)
    wm = WorldModel.from_config(tiny_config.wm, codec.dim, step_size=0.3)
    agent = ActorCritic.from_config(tiny_config.ac, codec.dim, tiny_config.wm.instr_dim)
    tiny_config.ac.batch_size = 1
    with pytest.raises(DatasetError):
        ActorCriticTrainer(agent, wm, codec, tiny_config.ac, tiny_config.wm, train_trajs, seed=0)


def test_intrinsic_reward_matches_brute_force():
    g = torch.Generator().manual_seed(7)
    a = torch.randn(1000, 6, generator=g, dtype=torch.float64)
    b = torch.randn(1000, 6, generator=g, dtype=torch.float64) * torch.rand(1000, 1, generator=g, dtype=torch.float64) * 3
    r = intrinsic_reward(a, b)
    for i in range(1000):
        x, y = a[i].tolist(), b[i].tolist()
        dot = sum(p * q for p, q in zip(x, y))
        scale = max(sum(p * p for p in x), sum(q * q for q in y))
        assert float(r[i]) == pytest.approx(dot / scale, abs=1e-12)
    assert torch.allclose(intrinsic_reward(a, a), torch.ones(1000, dtype=torch.float64))


def _lambda_return_expansion(rewards, values, gamma, lam):
    """Weighted sum of n-step returns, the closed form of the backward recursion."""
    h = len(rewards)
    out = []
    for t in range(h):
        def n_step(n):
            return sum(gamma**i * rewards[t + i] for i in range(n)) + gamma**n * values[t + n]

        remaining = h - t
        total = sum((1 - lam) * lam ** (n - 1) * n_step(n) for n in range(1, remaining))
        out.append(total + lam ** (remaining - 1) * n_step(remaining))
    return out


def test_lambda_returns_match_expansion():
    g = torch.Generator().manual_seed(3)
    for _ in range(1000):
        h = int(torch.randint(1, 7, (1,), generator=g))
        rewards = torch.randn(h, generator=g, dtype=torch.float64)
        values = torch.randn(h + 1, generator=g, dtype=torch.float64)
        gamma, lam = torch.rand(2, generator=g, dtype=torch.float64).tolist()
        got = lambda_returns(rewards, values, gamma, lam).tolist()
        assert got == pytest.approx(_lambda_return_expansion(rewards.tolist(), values.tolist(), gamma, lam), abs=1e-10)


def test_kl_matches_monte_carlo():
    p = PlanDistribution(torch.tensor([0.3, -1.0, 0.5], dtype=torch.float64), torch.tensor([0.2, -0.5, 0.0], dtype=torch.float64))
    q = PlanDistribution(torch.tensor([0.0, 0.4, 1.0], dtype=torch.float64), torch.tensor([-0.3, 0.1, 0.6], dtype=torch.float64))
    g = torch.Generator().manual_seed(0)
    x = p.sample(generator=g, noise=torch.randn(100_000, 3, generator=g, dtype=torch.float64))
    log_p = torch.distributions.Normal(p.mean, (0.5 * p.logvar).exp()).log_prob(x).sum(-1)
    log_q = torch.distributions.Normal(q.mean, (0.5 * q.logvar).exp()).log_prob(x).sum(-1)
    diff = log_p - log_q
    stderr = float(diff.std() / diff.numel() ** 0.5)
    assert abs(float(diff.mean()) - float(kl_gaussians(p, q))) < 3 * stderr


def test_critic_loss_gradient(param_gradcheck):
    torch.manual_seed(0)
    agent = ActorCritic(state_dim=5, instr_dim=4, plan_dim=2, hidden=8).double()
    states = torch.randn(3, 4, 5, dtype=torch.float64)
    instr = torch.randn(3, 4, 4, dtype=torch.float64)
    plan = torch.randn(3, 4, 2, dtype=torch.float64)
    returns = torch.randn(3, 4, dtype=torch.float64)
    mask = torch.tensor([[True] * 4, [True, True, False, False], [True] * 4])

    def loss():
        return critic_loss(agent.critic(states, instr, plan), returns, mask)

    assert param_gradcheck(agent.critic, loss) < 1e-4


def test_actor_loss_gradient_through_frozen_world_model(param_gradcheck):
    wm, agent = _wm_and_agent(state_dim=6)
    wm, agent = wm.double().eval(), agent.double()
    for p in wm.parameters():
        p.requires_grad_(False)
    g = torch.Generator().manual_seed(1)
    state = torch.randn(2, 6, generator=g, dtype=torch.float64)
    expert_next = torch.randn(2, 6, generator=g, dtype=torch.float64)
    instr = torch.randn(2, 16, generator=g, dtype=torch.float64)
    plan = torch.randn(2, 4, generator=g, dtype=torch.float64)
    action_noise = 0.1 * torch.randn(2, 3, generator=g, dtype=torch.float64)
    latent_noise = torch.randn(2, 6, generator=g, dtype=torch.float64)
    ids = wm.instructions.batch_tokens([[1, 2], [3]])
    values = torch.randn(2, 2, generator=g, dtype=torch.float64)
    kl = torch.rand(2, 1, generator=g, dtype=torch.float64)

    def loss():
        action = agent.actor(state, instr, plan).sample(noise=action_noise)
        nxt = wm.predict_next_latent(state[:, None], action, ids, steps=2, noise=latent_noise)
        reward = intrinsic_reward(expert_next, nxt)[:, None]
        returns = lambda_returns_batched(reward, values, 0.9, 0.8, torch.tensor([1, 1]))
        return actor_loss(returns, kl, torch.zeros_like(kl), alpha1=0.5, alpha2=0.1)

    assert param_gradcheck(agent.actor, loss) < 1e-3
