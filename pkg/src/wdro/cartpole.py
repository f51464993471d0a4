"""Cart-pole physics, tabular Q-learning, and the robust state-perturbation
variant that trains against adversarial next states.

The agent only observes the pole angle beta and its rate beta_dot,
discretized on a 30 x 15 grid; the cart coordinates evolve but are not
part of the learned state.  Reward is exp(-|beta|), episodes are capped at
400 steps, and failure means the pole tips past the angle limit or the
cart leaves the track.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

N_BETA_BINS = 30
N_BETA_DOT_BINS = 15
N_ACTIONS = 2  # 0: push left, 1: push right

VARIANTS = ("original", "light", "heavy", "long", "short", "soft-g", "strong-g")


@dataclass(frozen=True)
class CartPoleWorld:
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5          # half the pole length
    gravity: float = 9.8
    force_mag: float = 10.0
    dt: float = 0.02
    beta_limit: float = 0.21     # rad
    x_limit: float = 2.4         # m
    episode_cap: int = 400

    def __post_init__(self):
        for name in ("masscart", "masspole", "length", "gravity", "force_mag", "dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class FullState:
    x: float = 0.0
    x_dot: float = 0.0
    beta: float = 0.0
    beta_dot: float = 0.0


def make_variant(world: CartPoleWorld, name: str) -> CartPoleWorld:
    """Physics perturbations used for the evaluation matrix: pole mass
    halved/doubled, pole length halved/doubled, gravity weakened/strengthened
    by a factor of 5."""
    if name == "original":
        return world
    if name == "light":
        return replace(world, masspole=world.masspole / 2)
    if name == "heavy":
        return replace(world, masspole=world.masspole * 2)
    if name == "long":
        return replace(world, length=world.length * 2)
    if name == "short":
        return replace(world, length=world.length / 2)
    if name == "soft-g":
        return replace(world, gravity=world.gravity / 5)
    if name == "strong-g":
        return replace(world, gravity=world.gravity * 5)
    raise ValueError(f"unknown variant {name!r}")


def reward(beta: float) -> float:
    return math.exp(-abs(beta))


def is_failed(world: CartPoleWorld, s: FullState) -> bool:
    return abs(s.beta) > world.beta_limit or abs(s.x) > world.x_limit


def integrate(world: CartPoleWorld, s: FullState, force: float, dt: float) -> FullState:
    """One explicit Euler step of the standard cart-pole dynamics."""
    total_mass = world.masscart + world.masspole
    polemass_length = world.masspole * world.length
    sin_b = math.sin(s.beta)
    cos_b = math.cos(s.beta)
    temp = (force + polemass_length * s.beta_dot**2 * sin_b) / total_mass
    beta_acc = (world.gravity * sin_b - cos_b * temp) / (
        world.length * (4.0 / 3.0 - world.masspole * cos_b**2 / total_mass)
    )
    x_acc = temp - polemass_length * beta_acc * cos_b / total_mass
    return FullState(
        x=s.x + dt * s.x_dot,
        x_dot=s.x_dot + dt * x_acc,
        beta=s.beta + dt * s.beta_dot,
        beta_dot=s.beta_dot + dt * beta_acc,
    )


def step(world: CartPoleWorld, s: FullState, a: int):
    """Apply action a, returning (next state, reward, done).  Reward is
    exp(-|beta|) at the new angle; the 400-step cap is the episode
    driver's job, not this function's."""
    force = world.force_mag if a == 1 else -world.force_mag
    s_next = integrate(world, s, force, world.dt)
    return s_next, reward(s_next.beta), is_failed(world, s_next)


class QTable:
    """Action values on the discretized (beta, beta_dot) grid.

    30 bins for beta over [-beta_limit, beta_limit] and 15 for beta_dot
    over [-2, 2] rad/s, edge-clamped; out-of-range states land in the
    outermost bins.
    """

    def __init__(self, beta_limit=0.21, beta_dot_limit=2.0, discount=0.99):
        self.beta_limit = beta_limit
        self.beta_dot_limit = beta_dot_limit
        self.discount = discount
        self.values = np.zeros((N_BETA_BINS, N_BETA_DOT_BINS, N_ACTIONS))

    def cell(self, s: FullState):
        i = int((s.beta + self.beta_limit) / (2 * self.beta_limit) * N_BETA_BINS)
        j = int((s.beta_dot + self.beta_dot_limit) / (2 * self.beta_dot_limit) * N_BETA_DOT_BINS)
        i = min(max(i, 0), N_BETA_BINS - 1)
        j = min(max(j, 0), N_BETA_DOT_BINS - 1)
        return i, j

    def bin_centers(self):
        betas = (np.arange(N_BETA_BINS) + 0.5) / N_BETA_BINS * 2 * self.beta_limit - self.beta_limit
        bds = (np.arange(N_BETA_DOT_BINS) + 0.5) / N_BETA_DOT_BINS * 2 * self.beta_dot_limit - self.beta_dot_limit
        return betas, bds

    def best_value(self, s: FullState) -> float:
        i, j = self.cell(s)
        return float(np.max(self.values[i, j]))

    def greedy(self, s: FullState) -> int:
        i, j = self.cell(s)
        return int(np.argmax(self.values[i, j]))

    def copy(self) -> "QTable":
        out = QTable(self.beta_limit, self.beta_dot_limit, self.discount)
        out.values = self.values.copy()
        return out

    def save(self, path):
        doc = {
            "format": "wdro-qtable-v1",
            "beta_limit": self.beta_limit,
            "beta_dot_limit": self.beta_dot_limit,
            "discount": self.discount,
            "values": self.values.tolist(),
        }
        with open(path, "w") as fh:
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")))

    @classmethod
    def load(cls, path) -> "QTable":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != "wdro-qtable-v1":
            raise ValueError(f"unsupported table format {doc.get('format')!r}")
        out = cls(doc["beta_limit"], doc["beta_dot_limit"], doc["discount"])
        out.values = np.asarray(doc["values"], dtype=np.float64)
        return out


def q_update(q: QTable, s, a, s_next, r, alpha_t, terminal=False):
    """Tabular update toward r + discount * max_a' Q(s', a'); terminal
    transitions drop the bootstrap term.  Mutates q in place."""
    i, j = q.cell(s)
    target = r if terminal else r + q.discount * q.best_value(s_next)
    q.values[i, j, a] += alpha_t * (target - q.values[i, j, a])
    return q


def robust_next_state(
    world: CartPoleWorld,
    q: QTable,
    s_hat: FullState,
    gamma: float,
    mode: str = "drop_q_term",
    descent_steps: int = 10,
    descent_step0: float = 0.1,
):
    """Adversarial replacement for the sampled next state.

    drop_q_term: minimize reward(s) + gamma * c(s, s_hat) over (beta,
    beta_dot) with c the squared Euclidean distance on those coordinates,
    by gradient descent from s_hat (10 steps of 0.1/sqrt(t), steps that
    increase the objective are rejected and halve the scale).  The
    Q-dependent term is dropped, so only beta actually moves.

    over_covering: exact argmin of reward + discount * max_a Q + gamma * c
    over all bin centers of the table.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if mode == "over_covering":
        betas, bds = q.bin_centers()
        obj = (
            np.exp(-np.abs(betas))[:, None]
            + q.discount * np.max(q.values, axis=2)
            + gamma * ((betas - s_hat.beta) ** 2)[:, None]
            + gamma * ((bds - s_hat.beta_dot) ** 2)[None, :]
        )
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        return FullState(s_hat.x, s_hat.x_dot, float(betas[i]), float(bds[j]))
    if mode != "drop_q_term":
        raise ValueError(f"unknown mode {mode!r}")

    def objective(b, bd):
        return math.exp(-abs(b)) + gamma * ((b - s_hat.beta) ** 2 + (bd - s_hat.beta_dot) ** 2)

    b, bd = s_hat.beta, s_hat.beta_dot
    obj = objective(b, bd)
    scale = 1.0
    for t in range(1, descent_steps + 1):
        sgn = math.copysign(1.0, b) if b != 0 else 0.0
        gb = -sgn * math.exp(-abs(b)) + 2 * gamma * (b - s_hat.beta)
        gbd = 2 * gamma * (bd - s_hat.beta_dot)
        eta = scale * descent_step0 / math.sqrt(t)
        nb, nbd = b - eta * gb, bd - eta * gbd
        nobj = objective(nb, nbd)
        if nobj <= obj:
            b, bd, obj = nb, nbd, nobj
        else:
            scale *= 0.5
    return FullState(s_hat.x, s_hat.x_dot, b, bd)


def _epsilon(episode, episodes, eps_start=1.0, eps_final=0.05):
    # linear decay over the first half of training, then flat
    half = max(episodes // 2, 1)
    if episode >= half:
        return eps_final
    return eps_start + (eps_final - eps_start) * episode / half


def train_agent(
    world: CartPoleWorld,
    robust: bool,
    gamma: float = 150.0,
    episodes: int = 1000,
    seed: int = 0,
    alpha: float = 0.1,
    discount: float = 0.99,
    mode: str = "drop_q_term",
):
    """Epsilon-greedy tabular Q-learning; returns (QTable, episode lengths).

    The robust variant draws the nominal next state and bootstraps the
    update from its adversarial perturbation instead (the reward term is
    untouched), so the value function learns the perturbed transition
    kernel.  The episode itself follows the nominal physics; off-policy
    Q-learning does not care which chain generated the (s, a) visits.
    """
    rng = np.random.default_rng(seed)
    q = QTable(beta_limit=world.beta_limit, discount=discount)
    lengths = []
    for ep in range(episodes):
        eps = _epsilon(ep, episodes)
        s = FullState(*rng.uniform(-0.05, 0.05, size=4))
        steps_survived = 0
        for _ in range(world.episode_cap):
            a = int(rng.integers(N_ACTIONS)) if rng.random() < eps else q.greedy(s)
            s_next, r, done = step(world, s, a)
            if robust and not done:
                s_pert = robust_next_state(world, q, s_next, gamma, mode=mode)
                q_update(q, s, a, s_pert, r, alpha, terminal=done)
            else:
                q_update(q, s, a, s_next, r, alpha, terminal=done)
            s = s_next
            steps_survived += 1
            if done:
                break
        lengths.append(steps_survived)
    return q, lengths


def evaluate(q: QTable, world: CartPoleWorld, trials: int, seed: int = 0):
    """Greedy rollouts; returns (mean episode length, standard error).
    Starts are drawn uniformly from [-0.05, 0.05]^4 per trial."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    lengths = []
    for _ in range(trials):
        s = FullState(*rng.uniform(-0.05, 0.05, size=4))
        n = 0
        for _ in range(world.episode_cap):
            s, _, done = step(world, s, q.greedy(s))
            n += 1
            if done:
                break
        lengths.append(n)
    lengths = np.asarray(lengths, dtype=np.float64)
    stderr = float(lengths.std(ddof=0) / np.sqrt(trials))
    return float(lengths.mean()), stderr
