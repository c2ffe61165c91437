"""Deep Q-learning for meta-path search: MLP Q-function, replay, TD updates.

The Q-network scores every action (STOP plus each relation) from a set
encoding. Training interleaves epsilon-greedy episodes with Huber-loss TD
updates against a periodically synced target network; inference runs one
greedy episode and returns its final meta-path set. Per-episode and
per-update RNG streams are derived from (seed, counter), which makes
checkpoint resume bit-exact.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import load_arrays, save_arrays
from .util import derive_rng

log = logging.getLogger(__name__)

DEFAULT_HIDDEN = (32, 64, 32)


@dataclass
class QNetworkParams:
    """Fully-connected rectifier MLP: weight/bias per layer, linear output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(
        cls,
        n_in: int,
        n_out: int,
        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
        rng: np.random.Generator | None = None,
        dtype=np.float64,
    ) -> "QNetworkParams":
        rng = rng or np.random.default_rng()
        dims = (n_in, *hidden, n_out)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(weights, biases)

    def copy(self) -> "QNetworkParams":
        return QNetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    def check_finite(self) -> None:
        for arr in (*self.weights, *self.biases):
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError("non-finite Q-network parameters")


def _forward_batch(params: QNetworkParams, s: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass keeping post-activation values for the backward pass."""
    acts = [s]
    h = s
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k != last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def q_forward(params: QNetworkParams, s: np.ndarray) -> np.ndarray:
    """Q-values for one state vector."""
    s = np.asarray(s, dtype=params.weights[0].dtype)
    if s.shape != (params.n_in,):
        raise ValueError(f"state shape {s.shape} does not match input dim {params.n_in}")
    out, _ = _forward_batch(params, s[None, :])
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite Q values")
    return out[0]


def select_action(
    params: QNetworkParams,
    s: np.ndarray,
    mask: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """Epsilon-greedy over legal actions; greedy ties break to the lowest id."""
    legal = np.flatnonzero(mask)
    if len(legal) == 0:
        raise ValueError("no legal action (STOP must always be legal)")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.choice(legal))
    q = q_forward(params, s).copy()
    q[~np.asarray(mask, dtype=bool)] = -np.inf
    return int(np.argmax(q))


def huber_loss(delta) -> np.ndarray | float:
    """0.5*d^2 inside the unit interval, |d| - 0.5 outside."""
    delta = np.asarray(delta, dtype=np.float64)
    out = np.where(np.abs(delta) <= 1.0, 0.5 * delta**2, np.abs(delta) - 0.5)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """FIFO ring of transitions."""

    def __init__(self, capacity: int = 10000):
        self.capacity = capacity
        self._items: list[Transition] = []
        self._pos = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._pos] = t
        self._pos = (self._pos + 1) % self.capacity

    def sample(self, k: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]

    def state_arrays(self) -> dict[str, np.ndarray]:
        n = len(self._items)
        dim = len(self._items[0].s) if n else 0
        out = {
            "s": np.zeros((n, dim)),
            "a": np.zeros(n, dtype=np.int64),
            "r": np.zeros(n),
            "s2": np.zeros((n, dim)),
            "d": np.zeros(n, dtype=np.int64),
            "pos": np.asarray([self._pos], dtype=np.int64),
            "capacity": np.asarray([self.capacity], dtype=np.int64),
        }
        for i, t in enumerate(self._items):
            out["s"][i] = t.s
            out["a"][i] = t.a
            out["r"][i] = t.r
            out["s2"][i] = t.s_next
            out["d"][i] = int(t.done)
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ReplayBuffer":
        buf = cls(int(arrays["capacity"][0]))
        for i in range(len(arrays["a"])):
            buf._items.append(
                Transition(
                    arrays["s"][i].copy(),
                    int(arrays["a"][i]),
                    float(arrays["r"][i]),
                    arrays["s2"][i].copy(),
                    bool(arrays["d"][i]),
                )
            )
        buf._pos = int(arrays["pos"][0])
        return buf


def td_update(
    params: QNetworkParams,
    target_params: QNetworkParams,
    batch: list[Transition],
    gamma: float,
    lr: float,
) -> float:
    """One mean-Huber TD step in place; returns the batch loss.

    Bootstrap values come from the target network and are zeroed on
    terminal transitions.
    """
    if not batch:
        raise ValueError("td_update needs a non-empty batch")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    dtype = params.weights[0].dtype
    s = np.stack([t.s for t in batch]).astype(dtype)
    s2 = np.stack([t.s_next for t in batch]).astype(dtype)
    a = np.asarray([t.a for t in batch], dtype=np.int64)
    r = np.asarray([t.r for t in batch], dtype=dtype)
    done = np.asarray([t.done for t in batch], dtype=bool)

    q_next, _ = _forward_batch(target_params, s2)
    bootstrap = np.where(done, 0.0, gamma * q_next.max(axis=1))
    y = r + bootstrap

    q, acts = _forward_batch(params, s)
    rows = np.arange(len(batch))
    delta = q[rows, a] - y
    loss = float(np.mean(huber_loss(delta)))
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite TD loss; delta={delta!r}")

    # Reverse pass: d(mean Huber)/dQ[rows, a] = clip(delta, -1, 1) / B.
    # All gradients are taken at the pre-update weights, then applied at once.
    g = np.zeros_like(q)
    g[rows, a] = np.clip(delta, -1.0, 1.0) / len(batch)
    n_layers = len(params.weights)
    grads_w: list[np.ndarray | None] = [None] * n_layers
    grads_b: list[np.ndarray | None] = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        grads_w[k] = acts[k].T @ g
        grads_b[k] = g.sum(axis=0)
        if k > 0:
            g = (g @ params.weights[k].T) * (acts[k] > 0.0)
    for k in range(n_layers):
        params.weights[k] -= lr * grads_w[k]
        params.biases[k] -= lr * grads_b[k]
    return loss


@dataclass(frozen=True)
class DqnConfig:
    episodes: int = 60
    gamma: float = 0.9
    lr: float = 0.001
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_fraction: float = 0.5  # fraction of training steps spent decaying
    target_sync: int = 100
    batch_size: int = 32
    min_buffer: int = 200
    buffer_capacity: int = 10000
    precision: str = "double"  # or "single"
    seed: int = 0


class DqnAgent:
    """Owns the online/target networks, the buffer, and the schedule position."""

    def __init__(self, n_state: int, n_actions: int, config: DqnConfig):
        if config.min_buffer < config.batch_size:
            config = replace(config, min_buffer=config.batch_size)
        self.config = config
        dtype = np.float64 if config.precision == "double" else np.float32
        rng = derive_rng(config.seed, "qnet-init")
        self.params = QNetworkParams.init(n_state, n_actions, config.hidden, rng, dtype)
        self.target = self.params.copy()
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.env_steps = 0
        self.updates = 0
        self.episodes_done = 0
        self.total_steps_estimate = 1

    def epsilon(self) -> float:
        cfg = self.config
        horizon = max(1, int(cfg.eps_fraction * self.total_steps_estimate))
        frac = min(1.0, self.env_steps / horizon)
        return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)

    def act(self, s: np.ndarray, mask: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        return select_action(self.params, s, mask, epsilon, rng)

    def observe(self, t: Transition) -> None:
        self.buffer.push(t)
        self.env_steps += 1
        if len(self.buffer) >= self.config.min_buffer:
            batch = self.buffer.sample(
                self.config.batch_size, derive_rng(self.config.seed, "update", self.updates)
            )
            td_update(self.params, self.target, batch, self.config.gamma, self.config.lr)
            self.updates += 1
            if self.updates % self.config.target_sync == 0:
                self.target = self.params.copy()

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        header = {
            "kind": "dqn-agent",
            "format": 1,
            "env_steps": self.env_steps,
            "updates": self.updates,
            "episodes_done": self.episodes_done,
            "total_steps_estimate": self.total_steps_estimate,
            "hidden": list(self.config.hidden),
            "precision": self.config.precision,
        }
        arrays: dict[str, np.ndarray] = {}
        for k, (w, b) in enumerate(zip(self.params.weights, self.params.biases)):
            arrays[f"q.w{k}"] = w
            arrays[f"q.b{k}"] = b
        for k, (w, b) in enumerate(zip(self.target.weights, self.target.biases)):
            arrays[f"t.w{k}"] = w
            arrays[f"t.b{k}"] = b
        for name, arr in self.buffer.state_arrays().items():
            arrays[f"buf.{name}"] = arr
        save_arrays(path, header, arrays)

    @classmethod
    def load(cls, path: str, config: DqnConfig, n_state: int, n_actions: int) -> "DqnAgent":
        header, arrays = load_arrays(path)
        if header.get("kind") != "dqn-agent":
            raise ValueError(f"{path}: not a DQN agent checkpoint")
        agent = cls(n_state, n_actions, config)
        n_layers = len(agent.params.weights)
        dtype = agent.params.weights[0].dtype
        agent.params = QNetworkParams(
            [arrays[f"q.w{k}"].astype(dtype) for k in range(n_layers)],
            [arrays[f"q.b{k}"].astype(dtype) for k in range(n_layers)],
        )
        agent.target = QNetworkParams(
            [arrays[f"t.w{k}"].astype(dtype) for k in range(n_layers)],
            [arrays[f"t.b{k}"].astype(dtype) for k in range(n_layers)],
        )
        agent.buffer = ReplayBuffer.from_arrays(
            {name[len("buf.") :]: arr for name, arr in arrays.items() if name.startswith("buf.")}
        )
        agent.env_steps = int(header["env_steps"])
        agent.updates = int(header["updates"])
        agent.episodes_done = int(header["episodes_done"])
        agent.total_steps_estimate = int(header["total_steps_estimate"])
        return agent


def run_episode(env, agent: DqnAgent, rng: np.random.Generator, greedy: bool = False):
    """One episode; during training every transition feeds the buffer/updates."""
    state = env.reset()
    final_state = state
    total_reward = 0.0
    while True:
        eps = 0.0 if greedy else agent.epsilon()
        action = agent.act(state.encoding, env.action_mask(), eps, rng)
        out = env.step(action)
        if not greedy:
            agent.observe(
                Transition(state.encoding.copy(), action, out.reward, out.state.encoding.copy(), out.done)
            )
        total_reward += out.reward
        final_state = out.state
        state = out.state
        if out.done:
            return final_state, total_reward


def search(env, config: DqnConfig, agent: DqnAgent | None = None, checkpoint_path: str | None = None):
    """Train an agent on the environment, then run one greedy inference episode.

    Returns the inference episode's final meta-path set. Pass a restored
    ``agent`` to resume; remaining episodes are counted from its progress.
    """
    if agent is None:
        agent = DqnAgent(env.state_dim, env.n_actions, config)
    agent.total_steps_estimate = max(1, config.episodes * env.max_steps)
    for ep in range(agent.episodes_done, config.episodes):
        rng = derive_rng(config.seed, "episode", ep)
        _, total = run_episode(env, agent, rng)
        agent.episodes_done = ep + 1
        log.debug("episode %d: return %.4f eps %.3f", ep, total, agent.epsilon())
        if checkpoint_path and (ep + 1) % 10 == 0:
            agent.save(checkpoint_path)
    if checkpoint_path:
        agent.save(checkpoint_path)
    final_state, _ = run_episode(env, agent, derive_rng(config.seed, "inference"), greedy=True)
    return final_state.pset
