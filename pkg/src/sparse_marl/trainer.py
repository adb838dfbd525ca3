"""Episode collection, TD targets, the dense + auxiliary sparse losses, and the
outer training loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentParams, agent_forward, select_actions, unroll
from .attention import key_mask
from .buffer import Episode, EpisodeBatch, ReplayBuffer
from .config import RunConfig
from .env import FocusFire
from .errors import CheckpointMismatch, ConfigError, EmptyBatch
from .mixer import MixerParams, mix
from .numerics import (
    Optimizer,
    Tensor,
    backward,
    clip_grad_norm,
    clone,
    copy_into,
    detached,
    load_arrays,
    named_tensors,
    take_last,
    tsum,
)

log = logging.getLogger(__name__)


class Learner:
    """Online and target networks plus optimiser state for one run."""

    def __init__(self, config: RunConfig, rng: np.random.Generator):
        env = config.env
        self.config = config
        self.gamma = config.gamma
        self.lam = config.lam
        self.sync_interval = config.target_update_interval
        self.agent = AgentParams.init(rng, env.entity_dim, env.n_actions,
                                      config.embed_dim, config.hidden_dim)
        self.mixer = MixerParams.init(rng, config.mixer, env.n_allies, env.state_dim,
                                      config.mixing_embed_dim)
        self.aux_mixer = None
        if config.aux_mixer == "separate" and config.sparse_enabled:
            self.aux_mixer = MixerParams.init(rng, config.mixer, env.n_allies, env.state_dim,
                                              config.mixing_embed_dim)
        self.target_agent = clone(self.agent, requires_grad=False)
        self.target_mixer = clone(self.mixer, requires_grad=False)
        self.target_aux_mixer = clone(self.aux_mixer, requires_grad=False)
        self.optimizer = Optimizer(config.optimizer, config.lr, config.smoothing, config.optim_eps)
        self.episodes = 0
        self.train_steps = 0
        self.last_sync_episode = 0
        self.syncs = 0

    # -- structure ------------------------------------------------------
    @property
    def heads(self) -> tuple:
        return ("dense", "sparse") if self.config.sparse_enabled else ("dense",)

    @property
    def act_head(self) -> str:
        return self.config.act_head

    def loss_weights(self) -> tuple[float, float]:
        if self.config.ablation == "sparse_only":
            return 0.0, 1.0
        return 1.0, self.lam

    def mixer_for(self, head: str, target: bool = False) -> MixerParams:
        if head == "sparse" and self.aux_mixer is not None:
            return self.target_aux_mixer if target else self.aux_mixer
        return self.target_mixer if target else self.mixer

    def parameters(self) -> dict[str, Tensor]:
        params = named_tensors(self.agent, "agent.")
        params.update(named_tensors(self.mixer, "mixer."))
        params.update(named_tensors(self.aux_mixer, "aux_mixer."))
        return params

    def target_parameters(self) -> dict[str, Tensor]:
        params = named_tensors(self.target_agent, "agent.")
        params.update(named_tensors(self.target_mixer, "mixer."))
        params.update(named_tensors(self.target_aux_mixer, "aux_mixer."))
        return params

    def acting_params(self) -> AgentParams:
        return detached(self.agent)

    def sync_targets(self) -> None:
        copy_into(self.target_agent, self.agent)
        copy_into(self.target_mixer, self.mixer)
        if self.aux_mixer is not None:
            copy_into(self.target_aux_mixer, self.aux_mixer)
        self.last_sync_episode = self.episodes
        self.syncs += 1


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------


@dataclass
class RolloutStats:
    """Support sizes of the attention rows seen during a rollout."""

    sparse_support: list = field(default_factory=list)
    dense_support: list = field(default_factory=list)


def _stack_obs(obs):
    return np.stack([o.entities for o in obs]), np.stack([o.alive_mask for o in obs])


def collect_episode(env: FocusFire, learner: Learner, epsilon: float, rng: np.random.Generator,
                    stats: RolloutStats | None = None, on_step=None) -> Episode:
    """Roll one episode with epsilon-greedy on the acting head.

    ``stats`` collects per-row support sizes (sparse only if that head is enabled), and
    ``on_step(t, env, weights)`` is called before every action for diagnostics.
    """
    obs, s = env.reset()
    params = learner.acting_params()
    heads = (learner.act_head,)
    if stats is not None or on_step is not None:
        heads = tuple(dict.fromkeys((learner.act_head, "dense", *learner.heads)))
    if on_step is not None:
        heads = tuple(dict.fromkeys((*heads, "sparse")))
    n = env.config.n_allies
    h = Tensor(np.zeros((n, learner.agent.d_hidden)))
    ents, masks, avails, states, actions, rewards, terms = [], [], [], [], [], [], []
    won = False
    terminal = False
    t = 0
    while not terminal:
        e, m = _stack_obs(obs)
        avail = env.avail_actions()
        qs, h, weights = agent_forward(e, m, h, params, heads)
        if stats is not None:
            _record_support(stats, m, env.state.alive[:n], weights)
        if on_step is not None:
            on_step(t, env, weights)
        u = select_actions(qs[learner.act_head], avail, epsilon, rng)
        reward, terminal, info = env.step(u)
        ents.append(e)
        masks.append(m)
        avails.append(avail)
        states.append(s)
        actions.append(u)
        rewards.append(reward)
        terms.append(terminal and not info["episode_limit"])
        won = info["battle_won"]
        obs, s = env.observations(), env.global_state()
        t += 1
    e, m = _stack_obs(obs)
    ents.append(e)
    masks.append(m)
    avails.append(env.avail_actions())
    states.append(s)
    return Episode(
        entities=np.stack(ents), masks=np.stack(masks), avail=np.stack(avails),
        states=np.stack(states), actions=np.stack(actions), rewards=np.array(rewards),
        terminated=np.array(terms, dtype=bool), won=bool(won),
    )


def _record_support(stats: RolloutStats, masks, alive, weights) -> None:
    keys = key_mask(masks)
    for i in np.flatnonzero(alive):
        rows = masks[i]  # query rows of visible entities
        stats.dense_support.extend([int(keys[i].sum())] * int(rows.sum()))
        if "sparse" in weights:
            w = weights["sparse"].data[i][rows]
            stats.sparse_support.extend((w > 0).sum(axis=1).tolist())


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def td_targets(batch: EpisodeBatch, learner: Learner, heads=None) -> dict[str, np.ndarray]:
    """Bootstrapped targets r + gamma * (1 - terminal) * Qtot_target(s', greedy u').

    The next-step max is taken per agent over available actions of the target
    utility, then mixed by the target mixer.  Returns {head: (T, B)}.
    """
    if isinstance(heads, str):
        heads = (heads,)
    heads = tuple(heads or learner.heads)
    T, B = batch.rewards.shape
    N = batch.actions.shape[2]
    qs, _ = unroll(batch.entities, batch.masks, learner.target_agent, heads)
    avail_next = batch.avail[1:].reshape(T * B, N, -1)
    states_next = batch.states[1:].reshape(T * B, -1)
    not_done = 1.0 - batch.terminated.astype(np.float64)
    out = {}
    for head in heads:
        q_next = qs[head].data[B:]
        best = np.where(avail_next, q_next, -np.inf).max(axis=-1)
        q_tot = mix(best, states_next, learner.mixer_for(head, target=True)).data.reshape(T, B)
        out[head] = batch.rewards + learner.gamma * not_done * q_tot
    return out


@dataclass
class Losses:
    td: Tensor
    aux: Tensor
    total: Tensor

    def values(self) -> tuple[float, float, float]:
        return self.td.item(), self.aux.item(), self.total.item()


def compute_losses(batch: EpisodeBatch, learner: Learner, targets=None) -> Losses:
    """Masked mean squared TD errors of the dense and sparse joint values.

    ``total = w_td * td + w_aux * aux`` with weights (1, lambda) for S2RL,
    the auxiliary term dropped for dense_only and (0, 1) for sparse_only.
    """
    n_filled = int(batch.filled.sum())
    if n_filled == 0:
        raise EmptyBatch("batch has no filled steps")
    heads = learner.heads
    T, B = batch.rewards.shape
    N = batch.actions.shape[2]
    if targets is None:
        targets = td_targets(batch, learner, heads)
    qs, _ = unroll(batch.entities[:T], batch.masks[:T], learner.agent, heads)
    states = batch.states[:T].reshape(T * B, -1)
    actions = batch.actions.reshape(T * B, N)
    filled = batch.filled.reshape(-1).astype(np.float64)
    per_head = {}
    for head in heads:
        chosen = take_last(qs[head], actions)
        q_tot = mix(chosen, states, learner.mixer_for(head))
        err = (q_tot - targets[head].reshape(-1)) * filled
        per_head[head] = tsum(err * err) * (1.0 / n_filled)
    td = per_head["dense"]
    if "sparse" not in per_head:
        return Losses(td, Tensor(0.0), td)
    aux = per_head["sparse"]
    w_td, w_aux = learner.loss_weights()
    total = aux * w_aux if w_td == 0 else td + aux * w_aux
    return Losses(td, aux, total)


def apply_gradients(learner: Learner, loss: Tensor) -> float:
    """Backprop ``loss``, clip the global norm and take one optimiser step.

    Returns the gradient norm before clipping.
    """
    params = learner.parameters()
    grads = backward(loss)
    grad_arrays = {name: grads.get(p, np.zeros_like(p.data)) for name, p in params.items()}
    grad_arrays, norm = clip_grad_norm(grad_arrays, learner.config.grad_norm_clip)
    learner.optimizer.step(params, grad_arrays)
    return norm


def train_step(learner: Learner, buffer: ReplayBuffer, rng: np.random.Generator) -> dict:
    """Sample a batch, update online networks once, sync targets when due."""
    batch = buffer.sample(learner.config.batch_size, rng)
    losses = compute_losses(batch, learner)
    td, aux, total = losses.values()
    norm = apply_gradients(learner, losses.total)
    learner.train_steps += 1
    if learner.episodes - learner.last_sync_episode >= learner.sync_interval:
        learner.sync_targets()
    return {"loss_td": td, "loss_aux": aux, "loss_total": total, "grad_norm": norm}


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------

METRIC_FIELDS = (
    "episode", "env_steps", "epsilon", "loss_td", "loss_aux", "loss_total",
    "train_return_mean", "test_win_rate", "test_return_mean", "wall_ms",
    "mean_sparse_support", "mean_dense_support",
)


@dataclass
class MetricsRow:
    episode: int
    env_steps: int
    epsilon: float
    loss_td: float
    loss_aux: float
    loss_total: float
    train_return_mean: float
    test_win_rate: float
    test_return_mean: float
    wall_ms: float
    mean_sparse_support: float
    mean_dense_support: float


@dataclass
class TrainResult:
    learner: Learner
    rows: list
    seed: int


def _streams(seed: int):
    """Independent RNG streams: init, train env, actions, replay sampling, eval env."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]


def evaluate(learner: Learner, config: RunConfig, seed: int, episodes: int):
    """Greedy episodes on a fixed set of battles. Returns (win rate, mean return, stats)."""
    env = FocusFire(config.env, seed=_eval_seed(seed))
    rng = np.random.default_rng(0)
    stats = RolloutStats()
    wins, returns = 0, []
    for _ in range(episodes):
        ep = collect_episode(env, learner, 0.0, rng, stats)
        wins += ep.won
        returns.append(ep.episode_return)
    return wins / episodes, float(np.mean(returns)), stats


def _eval_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 7919]).generate_state(1)[0])


def _nanmean(xs) -> float:
    return float(np.mean(xs)) if len(xs) else float("nan")


def train(config: RunConfig, seed: int, on_row=None) -> TrainResult:
    """Collect/learn until ``t_max`` env steps, evaluating every ``eval_interval`` episodes.

    A row is produced at episode 0 and after each evaluation interval, plus a
    final one if the budget ends between evaluations.
    """
    init_rng, env_rng, act_rng, sample_rng, _ = _streams(seed)
    learner = Learner(config, init_rng)
    env = FocusFire(config.env, seed=int(env_rng.integers(2**63)))
    buffer = ReplayBuffer(config.buffer_size)
    schedule = config.epsilon_schedule
    rows: list[MetricsRow] = []
    env_steps = 0
    window_losses: list[tuple] = []
    window_returns: list[float] = []
    started = time.perf_counter()

    def emit():
        win, ret, stats = evaluate(learner, config, seed, config.eval_episodes)
        losses = np.array(window_losses) if window_losses else np.full((0, 3), np.nan)
        row = MetricsRow(
            episode=learner.episodes,
            env_steps=env_steps,
            epsilon=schedule(env_steps),
            loss_td=_nanmean(losses[:, 0]),
            loss_aux=_nanmean(losses[:, 1]),
            loss_total=_nanmean(losses[:, 2]),
            train_return_mean=_nanmean(window_returns),
            test_win_rate=win,
            test_return_mean=ret,
            wall_ms=(time.perf_counter() - started) * 1000.0,
            mean_sparse_support=_nanmean(stats.sparse_support),
            mean_dense_support=_nanmean(stats.dense_support),
        )
        rows.append(row)
        window_losses.clear()
        window_returns.clear()
        if on_row is not None:
            on_row(row)
        log.info("seed %d ep %d steps %d win %.3f td %.4f", seed, row.episode, row.env_steps,
                 row.test_win_rate, row.loss_td)

    emit()
    while env_steps < config.t_max:
        ep = collect_episode(env, learner, schedule(env_steps), act_rng)
        buffer.add(ep)
        env_steps += ep.length
        learner.episodes += 1
        window_returns.append(ep.episode_return)
        if buffer.can_sample(config.batch_size):
            m = train_step(learner, buffer, sample_rng)
            window_losses.append((m["loss_td"], m["loss_aux"], m["loss_total"]))
        if learner.episodes % config.eval_interval == 0:
            emit()
    if rows[-1].episode != learner.episodes:
        emit()
    return TrainResult(learner, rows, seed)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, learner: Learner, seed: int | None = None) -> None:
    """Write online and target parameters to an uncompressed ``.npz``.

    Arrays are stored as ``online/<name>`` and ``target/<name>``; a JSON
    string under ``__meta__`` holds the format version, counters and the full
    resolved run config.  Loading restores every array bitwise.
    """
    arrays = {f"online/{k}": t.data for k, t in learner.parameters().items()}
    arrays.update({f"target/{k}": t.data for k, t in learner.target_parameters().items()})
    meta = {
        "version": CHECKPOINT_VERSION,
        "seed": seed,
        "episodes": learner.episodes,
        "train_steps": learner.train_steps,
        "config": learner.config.to_dict(),
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[Learner, dict]:
    """Rebuild a Learner from ``save_checkpoint`` output. Raises CheckpointMismatch."""
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise CheckpointMismatch(f"cannot read checkpoint {path}: {exc}") from exc
    if "__meta__" not in arrays:
        raise CheckpointMismatch("checkpoint has no metadata")
    meta = json.loads(str(arrays.pop("__meta__")))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatch(f"unsupported checkpoint version {meta.get('version')!r}")
    try:
        config = RunConfig.from_dict(meta["config"])
    except ConfigError as exc:
        raise CheckpointMismatch(f"checkpoint config is invalid: {exc}") from exc
    learner = Learner(config, np.random.default_rng(0))
    expected = {f"online/{k}" for k in learner.parameters()}
    expected |= {f"target/{k}" for k in learner.target_parameters()}
    extra = sorted(set(arrays) - expected)
    if extra:
        raise CheckpointMismatch(f"unexpected parameters: {extra}")
    online = {k[len("online/"):]: v for k, v in arrays.items() if k.startswith("online/")}
    target = {k[len("target/"):]: v for k, v in arrays.items() if k.startswith("target/")}
    load_arrays(learner.agent, online, "agent.")
    load_arrays(learner.mixer, online, "mixer.")
    load_arrays(learner.target_agent, target, "agent.")
    load_arrays(learner.target_mixer, target, "mixer.")
    if learner.aux_mixer is not None:
        load_arrays(learner.aux_mixer, online, "aux_mixer.")
        load_arrays(learner.target_aux_mixer, target, "aux_mixer.")
    learner.episodes = int(meta.get("episodes", 0))
    learner.train_steps = int(meta.get("train_steps", 0))
    return learner, meta
