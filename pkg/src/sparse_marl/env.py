"""FocusFire: a small entity-based cooperative combat task.

N learning allies fight E scripted enemies on an L x L arena that also holds D
inert distractor entities.  Each ally observes a list of entity rows and picks
one of E + 6 actions (no-op, stop, four cardinal moves, attack enemy j), the
same action layout as SMAC micromanagement maps.  Enemies attack the nearest
ally in range, otherwise step toward the nearest ally.

Within a step, moves resolve first, then every attack (decided from the
start-of-step positions), then deaths.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .attention import EntitySet
from .errors import EpisodeFinished, InvalidConfig, UnavailableAction

ALLY, ENEMY, DISTRACTOR = 0, 1, 2
TEAM_NAMES = ("ally", "enemy", "distractor")

NOOP, STOP, MOVE_N, MOVE_S, MOVE_E, MOVE_W = range(6)
N_BASE_ACTIONS = 6
_MOVES = {MOVE_N: (0.0, 1.0), MOVE_S: (0.0, -1.0), MOVE_E: (1.0, 0.0), MOVE_W: (-1.0, 0.0)}

UNIT_STATE_FEATURES = 6  # x/L, y/L, health fraction, team one-hot(3)
SPAWN_SPREAD = 1.5


@dataclass(frozen=True)
class EnvConfig:
    n_allies: int = 3
    n_enemies: int = 3
    n_distractors: int = 6
    arena_size: float = 16.0
    sight_range: float = 9.0
    ally_attack_range: float = 3.0
    ally_damage: float = 4.0
    enemy_attack_range: float = 2.0
    enemy_damage: float = 3.0
    unit_health: float = 20.0
    move_step: float = 1.0
    episode_limit: int = 60
    reward_damage: float = 0.05
    reward_kill: float = 0.5
    reward_win: float = 2.0

    def problems(self) -> dict[str, str]:
        errs = {}
        if self.n_allies < 1:
            errs["n_allies"] = "must be >= 1"
        if self.n_enemies < 1:
            errs["n_enemies"] = "must be >= 1"
        if self.n_distractors < 0:
            errs["n_distractors"] = "must be >= 0"
        for name in ("arena_size", "sight_range", "unit_health", "move_step",
                     "ally_attack_range", "enemy_attack_range"):
            if not getattr(self, name) > 0:
                errs[name] = "must be > 0"
        for name in ("ally_damage", "enemy_damage", "reward_damage", "reward_kill", "reward_win"):
            if getattr(self, name) < 0:
                errs[name] = "must be >= 0"
        if self.episode_limit < 1:
            errs["episode_limit"] = "must be >= 1"
        return errs

    def validate(self) -> "EnvConfig":
        errs = self.problems()
        if errs:
            raise InvalidConfig("; ".join(f"{k}: {v}" for k, v in errs.items()))
        return self

    @property
    def n_units(self) -> int:
        return self.n_allies + self.n_enemies + self.n_distractors

    @property
    def n_entities(self) -> int:
        return self.n_units

    @property
    def n_actions(self) -> int:
        return self.n_enemies + N_BASE_ACTIONS

    @property
    def entity_dim(self) -> int:
        return 5 + 3 + self.n_allies

    @property
    def state_dim(self) -> int:
        return self.n_units * UNIT_STATE_FEATURES


@dataclass
class WorldState:
    """Full simulator state. Units are ordered allies, enemies, distractors."""

    team: np.ndarray
    pos: np.ndarray
    health: np.ndarray
    max_health: np.ndarray
    attack_range: np.ndarray
    damage: np.ndarray
    t: int = 0
    limit: int = 60
    terminal: bool = False

    @property
    def alive(self) -> np.ndarray:
        return self.health > 0

    @property
    def present(self) -> np.ndarray:
        """Entities that exist on the map: living units and all distractors."""
        return self.alive | (self.team == DISTRACTOR)

    def copy(self) -> "WorldState":
        return dataclasses.replace(
            self, **{f.name: getattr(self, f.name).copy()
                     for f in dataclasses.fields(self) if isinstance(getattr(self, f.name), np.ndarray)}
        )


def _units(config: EnvConfig):
    n, e, d = config.n_allies, config.n_enemies, config.n_distractors
    team = np.array([ALLY] * n + [ENEMY] * e + [DISTRACTOR] * d)
    hp = np.where(team == DISTRACTOR, 0.0, config.unit_health)
    rng_ = np.where(team == ALLY, config.ally_attack_range,
                    np.where(team == ENEMY, config.enemy_attack_range, 0.0))
    dmg = np.where(team == ALLY, config.ally_damage, np.where(team == ENEMY, config.enemy_damage, 0.0))
    return team, hp, rng_, dmg


def reset(config: EnvConfig, rng: np.random.Generator):
    """Spawn a new battle; returns (state, per-agent observations, global state)."""
    config.validate()
    L = config.arena_size
    half = L / 2.0
    team, hp, attack_range, damage = _units(config)

    def group(count, x_lo, x_hi):
        cx = rng.uniform(x_lo + 0.15 * L, x_lo + 0.35 * L)
        cy = rng.uniform(0.3 * L, 0.7 * L)
        pts = np.array([cx, cy]) + rng.uniform(-SPAWN_SPREAD, SPAWN_SPREAD, size=(count, 2))
        pts[:, 0] = np.clip(pts[:, 0], x_lo, x_hi)
        pts[:, 1] = np.clip(pts[:, 1], 0.0, L)
        return pts

    allies = group(config.n_allies, 0.0, half - 1e-6)
    enemies = group(config.n_enemies, half, L)
    distractors = rng.uniform(0.0, L, size=(config.n_distractors, 2))
    state = WorldState(
        team=team,
        pos=np.concatenate([allies, enemies, distractors]),
        health=hp.copy(),
        max_health=hp.copy(),
        attack_range=attack_range,
        damage=damage,
        t=0,
        limit=config.episode_limit,
    )
    return state, observe_all(state, config), global_state(state, config)


def _entity_order(config: EnvConfig, agent: int) -> np.ndarray:
    others = [j for j in range(config.n_allies) if j != agent]
    rest = list(range(config.n_allies, config.n_units))
    return np.array([agent] + others + rest)


def observe(state: WorldState, agent: int, config: EnvConfig) -> EntitySet:
    """Entity rows seen by ``agent``; self first, then allies, enemies, distractors.

    Row layout: [visible, dx/L, dy/L, dist/L, health fraction, team one-hot(3),
    observer id one-hot(N)].  Entities out of sight or dead are all-zero rows;
    a dead observer sees nothing.
    """
    if not 0 <= agent < config.n_allies:
        raise IndexError(f"agent index {agent} out of range")
    L = config.arena_size
    order = _entity_order(config, agent)
    rows = np.zeros((config.n_units, config.entity_dim))
    if not state.alive[agent]:
        return EntitySet(rows, np.zeros(config.n_units, dtype=bool))
    delta = state.pos[order] - state.pos[agent]
    dist = np.hypot(delta[:, 0], delta[:, 1])
    visible = state.present[order] & (dist <= config.sight_range)
    visible[0] = True
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(state.max_health[order] > 0, state.health[order] / state.max_health[order], 0.0)
    rows[:, 0] = 1.0
    rows[:, 1:3] = delta / L
    rows[:, 3] = dist / L
    rows[:, 4] = frac
    rows[np.arange(len(order)), 5 + state.team[order]] = 1.0
    rows[:, 8 + agent] = 1.0
    rows[~visible] = 0.0
    return EntitySet(rows, visible)


def observe_all(state: WorldState, config: EnvConfig) -> list[EntitySet]:
    return [observe(state, i, config) for i in range(config.n_allies)]


def avail_actions(state: WorldState, agent: int, config: EnvConfig) -> np.ndarray:
    mask = np.zeros(config.n_actions, dtype=bool)
    mask[NOOP] = True
    if not state.alive[agent]:
        return mask
    mask[STOP] = True
    L, step = config.arena_size, config.move_step
    x, y = state.pos[agent]
    mask[MOVE_N] = y + step <= L
    mask[MOVE_S] = y - step >= 0
    mask[MOVE_E] = x + step <= L
    mask[MOVE_W] = x - step >= 0
    first = config.n_allies
    enemies = state.pos[first:first + config.n_enemies]
    dist = np.hypot(*(enemies - state.pos[agent]).T)
    mask[N_BASE_ACTIONS:] = state.alive[first:first + config.n_enemies] & (dist <= config.ally_attack_range)
    return mask


def all_avail_actions(state: WorldState, config: EnvConfig) -> np.ndarray:
    return np.stack([avail_actions(state, i, config) for i in range(config.n_allies)])


def global_state(state: WorldState, config: EnvConfig) -> np.ndarray:
    """Per-unit [x/L, y/L, health fraction, team one-hot] in unit order, ignoring sight."""
    out = np.zeros((config.n_units, UNIT_STATE_FEATURES))
    out[:, :2] = state.pos / config.arena_size
    with np.errstate(invalid="ignore", divide="ignore"):
        out[:, 2] = np.where(state.max_health > 0, state.health / state.max_health, 0.0)
    out[np.arange(config.n_units), 3 + state.team] = 1.0
    return out.reshape(-1)


def _enemy_intents(state: WorldState, config: EnvConfig):
    """For each living enemy: ('attack', ally) or ('move', ally) from current positions."""
    n = config.n_allies
    ally_alive = np.flatnonzero(state.alive[:n])
    intents = {}
    if ally_alive.size == 0:
        return intents
    for e in range(n, n + config.n_enemies):
        if not state.alive[e]:
            continue
        d = np.hypot(*(state.pos[ally_alive] - state.pos[e]).T)
        nearest = int(ally_alive[np.argmin(d)])
        if d.min() <= state.attack_range[e]:
            intents[e] = ("attack", nearest)
        else:
            intents[e] = ("move", nearest)
    return intents


def step(state: WorldState, actions, config: EnvConfig):
    """Advance one tick. Returns (next_state, reward, terminal, info)."""
    if state.terminal:
        raise EpisodeFinished("episode already terminated; call reset()")
    actions = [int(a) for a in actions]
    if len(actions) != config.n_allies:
        raise UnavailableAction(f"expected {config.n_allies} actions, got {len(actions)}")
    for i, a in enumerate(actions):
        if not 0 <= a < config.n_actions or not avail_actions(state, i, config)[a]:
            raise UnavailableAction(f"agent {i}: action {a} is not available")

    nxt = state.copy()
    n, L = config.n_allies, config.arena_size
    intents = _enemy_intents(state, config)

    # moves
    for i, a in enumerate(actions):
        if a in _MOVES:
            dx, dy = _MOVES[a]
            nxt.pos[i] = np.clip(state.pos[i] + config.move_step * np.array([dx, dy]), 0.0, L)
    for e, (kind, target) in intents.items():
        if kind == "move":
            vec = state.pos[target] - state.pos[e]
            dist = float(np.hypot(*vec))
            if dist > 0:
                nxt.pos[e] = np.clip(state.pos[e] + vec * min(config.move_step, dist) / dist, 0.0, L)

    # attacks, all from start-of-step liveness
    incoming = np.zeros(config.n_units)
    for i, a in enumerate(actions):
        if a >= N_BASE_ACTIONS:
            incoming[n + a - N_BASE_ACTIONS] += state.damage[i]
    for e, (kind, target) in intents.items():
        if kind == "attack":
            incoming[target] += state.damage[e]

    nxt.health = np.maximum(state.health - incoming, 0.0)
    enemy = slice(n, n + config.n_enemies)
    dealt = float((state.health[enemy] - nxt.health[enemy]).sum())
    kills = int((state.alive[enemy] & ~nxt.alive[enemy]).sum())
    won = not nxt.alive[enemy].any()
    lost = not nxt.alive[:n].any()
    nxt.t = state.t + 1
    timeout = nxt.t >= state.limit
    nxt.terminal = bool(won or lost or timeout)

    reward = config.reward_damage * dealt + config.reward_kill * kills + (config.reward_win if won else 0.0)
    info = {
        "battle_won": bool(won),
        "episode_limit": bool(timeout and not (won or lost)),
        "dead_allies": int((~nxt.alive[:n]).sum()),
        "dead_enemies": int((~nxt.alive[enemy]).sum()),
        "damage_dealt": dealt,
    }
    return nxt, float(reward), nxt.terminal, info


class FocusFire:
    """Stateful wrapper holding one world and its RNG."""

    def __init__(self, config: EnvConfig | None = None, seed: int | None = 0):
        self.config = (config or EnvConfig()).validate()
        self.rng = np.random.default_rng(seed)
        self.state: WorldState | None = None

    def reset(self):
        self.state, obs, s = reset(self.config, self.rng)
        return obs, s

    def step(self, actions):
        self.state, reward, terminal, info = step(self.state, actions, self.config)
        return reward, terminal, info

    def observations(self) -> list[EntitySet]:
        return observe_all(self.state, self.config)

    def avail_actions(self) -> np.ndarray:
        return all_avail_actions(self.state, self.config)

    def global_state(self) -> np.ndarray:
        return global_state(self.state, self.config)

    def entity_teams(self, agent: int) -> np.ndarray:
        return self.state.team[_entity_order(self.config, agent)]

    def entity_distances(self, agent: int) -> np.ndarray:
        order = _entity_order(self.config, agent)
        return np.hypot(*(self.state.pos[order] - self.state.pos[agent]).T)
