"""Offline Q-learning with a Random Ensemble Mixture of MLP heads.

The ensemble holds K independently initialised Q-networks (or one shared
trunk with K output blocks).  Each update draws fresh nonnegative weights
summing to one, forms the convex combination of head outputs on both the
online and target sides, and regresses the combined Q(s, a) onto the
one-step bootstrapped target with an importance-weighted Huber loss.
Evaluation uses the plain head mean.

Networks, backprop and the optimisers are implemented directly on numpy
arrays; the whole training path is deterministic for a fixed seed.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .env import OBSERVATION_DIM, Action
from .errors import ConfigError, PumpschedError
from .replay import PrioritizedBuffer, TransitionBatch

N_ACTIONS = len(Action)


class TrainingDiverged(PumpschedError):
    """Loss became non-finite; training aborted."""


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the offline trainer; defaults are desk-scale."""

    gamma: float = 0.99
    lr: float = 1e-4
    batch_size: int = 256
    k: int = 4
    hidden: tuple[int, ...] = (64, 64)
    target_sync: int = 2000
    grad_clip: float = 10.0
    huber_delta: float = 1.0
    optimizer: str = "adam"          # "adam" or "sgd"
    architecture: str = "independent"  # or "shared_trunk"
    beta_start: float = 0.4
    beta_end: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.k < 1:
            raise ConfigError(f"need at least one head, got k={self.k}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.architecture not in ("independent", "shared_trunk"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")


class MLP:
    """Dense ReLU network with an identity output layer."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray):
        """Returns (output, cache); input shape (B, in)."""
        a = x
        cache = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            cache.append((a, z))
            a = z if i == last else np.maximum(z, 0.0)
        return a, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of a scalar loss wrt all parameters, given dL/d(output)."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            a_in, z = cache[i]
            if i != len(self.weights) - 1:
                g = g * (z > 0.0)
            grads_w[i] = a_in.T @ g
            grads_b[i] = g.sum(axis=0)
            if i > 0:
                g = g @ self.weights[i].T
        return grads_w, grads_b

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "MLP":
        clone = object.__new__(MLP)
        clone.sizes = list(self.sizes)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone


def sample_alphas(k: int, rng: np.random.Generator) -> np.ndarray:
    """Fresh random point on the probability simplex (uniform draws,
    normalised)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    draws = rng.random(k)
    total = draws.sum()
    if total == 0.0:
        return np.full(k, 1.0 / k)
    return draws / total


class QEnsemble:
    """K Q-heads plus a frozen target copy."""

    def __init__(self, cfg: TrainConfig, rng: np.random.Generator,
                 obs_dim: int = OBSERVATION_DIM, n_actions: int = N_ACTIONS):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        sizes = [obs_dim, *cfg.hidden]
        if cfg.architecture == "independent":
            self.nets = [MLP(sizes + [n_actions], rng) for _ in range(cfg.k)]
        else:
            self.nets = [MLP(sizes + [n_actions * cfg.k], rng)]
        self.targets = [net.copy() for net in self.nets]

    def head_values(self, x: np.ndarray, target: bool = False) -> np.ndarray:
        """All head outputs, shape (B, K, A); no caches kept."""
        nets = self.targets if target else self.nets
        if self.cfg.architecture == "independent":
            return np.stack([net(x) for net in nets], axis=1)
        out = nets[0](x)
        return out.reshape(len(x), self.cfg.k, self.n_actions)

    def mean_q(self, x: np.ndarray) -> np.ndarray:
        """Head-mean Q-values (uniform mixture), shape (B, A)."""
        return self.head_values(x).mean(axis=1)

    def sync_target(self):
        self.targets = [net.copy() for net in self.nets]

    def parameters(self) -> list[np.ndarray]:
        return [p for net in self.nets for p in net.parameters()]


def rem_q(ensemble: QEnsemble, alphas: np.ndarray, x: np.ndarray,
          target: bool = False) -> np.ndarray:
    """Convex combination of head Q-values, shape (B, A)."""
    alphas = np.asarray(alphas, dtype=float)
    heads = ensemble.head_values(np.atleast_2d(x), target=target)
    return np.einsum("k,bka->ba", alphas, heads)


def greedy_policy(ensemble: QEnsemble, state_vec: np.ndarray) -> Action:
    """Argmax of the head-mean Q-vector; ties go to the lowest index."""
    q = ensemble.mean_q(np.atleast_2d(state_vec))[0]
    return Action(int(np.argmax(q)))


def huber(e: np.ndarray, delta: float) -> np.ndarray:
    ae = np.abs(e)
    return np.where(ae <= delta, 0.5 * e * e, delta * (ae - 0.5 * delta))


def huber_grad(e: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(e, -delta, delta)


class _Optimizer:
    """SGD or Adam over a flat parameter list, with global-norm clipping."""

    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        if cfg.optimizer == "adam":
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
            self.t = 0

    def step(self, grads: list[np.ndarray]):
        clip = self.cfg.grad_clip
        if clip and np.isfinite(clip):
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > clip:
                scale = clip / norm
                grads = [g * scale for g in grads]
        if self.cfg.optimizer == "sgd":
            for p, g in zip(self.params, grads):
                p -= self.cfg.lr * g
            return
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        correction1 = 1.0 - b1 ** self.t
        correction2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.cfg.lr * (m / correction1) / (np.sqrt(v / correction2) + eps)


def train_step(ensemble: QEnsemble, batch: TransitionBatch,
               alphas: np.ndarray, cfg: TrainConfig,
               optimizer: _Optimizer) -> tuple[float, np.ndarray]:
    """One REM update; returns (loss, per-sample |TD error|).

    Target: y = r + gamma * (1 - terminal) * max_a sum_k alpha_k Q_target,k(s', a)
    Loss:   importance-weighted Huber of y - sum_k alpha_k Q_k(s, a)
    """
    b = len(batch)
    rows = np.arange(b)
    q_next = rem_q(ensemble, alphas, batch.next_obs, target=True)
    y = batch.rewards + cfg.gamma * (1.0 - batch.terminals) * q_next.max(axis=1)

    if ensemble.cfg.architecture == "independent":
        outs, caches = [], []
        for net in ensemble.nets:
            out, cache = net.forward(batch.obs)
            outs.append(out)
            caches.append(cache)
        q_sa = np.zeros(b)
        for k, out in enumerate(outs):
            q_sa += alphas[k] * out[rows, batch.actions]
    else:
        out, cache = ensemble.nets[0].forward(batch.obs)
        heads = out.reshape(b, cfg.k, ensemble.n_actions)
        q_sa = np.einsum("k,bk->b", alphas, heads[rows, :, batch.actions])

    e = y - q_sa
    loss = float((batch.weights * huber(e, cfg.huber_delta)).sum() / b)
    if not np.isfinite(loss):
        raise TrainingDiverged(
            f"loss became non-finite ({loss}); check learning rate and data")

    # dL/d q_sa, then scatter into each head's output gradient
    g_q = -(batch.weights * huber_grad(e, cfg.huber_delta)) / b
    grads: list[np.ndarray] = []
    if ensemble.cfg.architecture == "independent":
        for k, net in enumerate(ensemble.nets):
            grad_out = np.zeros_like(outs[k])
            grad_out[rows, batch.actions] = alphas[k] * g_q
            gw, gb = net.backward(caches[k], grad_out)
            for w, bb in zip(gw, gb):
                grads.append(w)
                grads.append(bb)
    else:
        grad_out = np.zeros_like(out)
        for k in range(cfg.k):
            grad_out[rows, k * ensemble.n_actions + batch.actions] = alphas[k] * g_q
        gw, gb = ensemble.nets[0].backward(cache, grad_out)
        for w, bb in zip(gw, gb):
            grads.append(w)
            grads.append(bb)

    optimizer.step(grads)
    return loss, np.abs(e)


class REMAgent:
    """Offline trainer with a light scikit-learn flavoured surface
    (fit / predict / get_params)."""

    def __init__(self, config: TrainConfig = TrainConfig(),
                 obs_dim: int = OBSERVATION_DIM, n_actions: int = N_ACTIONS):
        self.config = config
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        init_ss, alpha_ss, sample_ss = np.random.SeedSequence(config.seed).spawn(3)
        self._alpha_rng = np.random.default_rng(alpha_ss)
        self._sample_rng = np.random.default_rng(sample_ss)
        self.ensemble = QEnsemble(config, np.random.default_rng(init_ss),
                                  obs_dim, n_actions)
        self._optimizer = _Optimizer(self.ensemble.parameters(), config)
        self._updates = 0
        self.history: list[dict] = []

    def fit(self, buffer: PrioritizedBuffer, steps: int,
            log_every: int = 50) -> "REMAgent":
        """Run ``steps`` REM updates against the replay buffer."""
        cfg = self.config
        for i in range(steps):
            beta = cfg.beta_start + (cfg.beta_end - cfg.beta_start) * (
                i / max(steps - 1, 1))
            batch = buffer.sample(cfg.batch_size, beta, self._sample_rng)
            alphas = sample_alphas(cfg.k, self._alpha_rng)
            loss, td = train_step(self.ensemble, batch, alphas, cfg,
                                  self._optimizer)
            buffer.update_priorities(batch.indices, td)
            self._updates += 1
            if self._updates % cfg.target_sync == 0:
                self.ensemble.sync_target()
            if i % log_every == 0 or i == steps - 1:
                q = self.ensemble.mean_q(batch.obs)
                self.history.append({
                    "step": self._updates, "loss": loss,
                    "mean_td": float(td.mean()),
                    "mean_q": float(q[np.arange(len(batch)), batch.actions].mean()),
                    "max_q": float(q.max()),
                })
        return self

    def fine_tune(self, env, buffer: PrioritizedBuffer, steps: int,
                  epsilon: float = 0.1, updates_per_step: int = 1) -> "REMAgent":
        """Optional online loop: epsilon-greedy environment interaction
        interleaved with updates.

        Offline training never touches this; it exists for exploration
        research on top of an offline-trained ensemble.  The environment
        must be reset and have demand left to consume.
        """
        from .env import Transition, encode_observation

        cfg = self.config
        obs_vec = encode_observation(env.observation(), env.demand_max)
        for _ in range(steps):
            if self._sample_rng.random() < epsilon:
                action = int(self._sample_rng.integers(0, self.n_actions))
            else:
                action = int(self.predict(obs_vec))
            obs, reward, info = env.step(action)
            next_vec = encode_observation(obs, env.demand_max)
            buffer.push(Transition(obs=obs_vec, action=action, reward=reward,
                                   next_obs=next_vec,
                                   terminal=info["episode_end"]))
            obs_vec = next_vec
            if len(buffer) >= cfg.batch_size:
                for _ in range(updates_per_step):
                    batch = buffer.sample(cfg.batch_size, cfg.beta_end,
                                          self._sample_rng)
                    alphas = sample_alphas(cfg.k, self._alpha_rng)
                    loss, td = train_step(self.ensemble, batch, alphas, cfg,
                                          self._optimizer)
                    buffer.update_priorities(batch.indices, td)
                    self._updates += 1
                    if self._updates % cfg.target_sync == 0:
                        self.ensemble.sync_target()
        return self

    def predict(self, obs: np.ndarray) -> np.ndarray | Action:
        """Greedy action(s) from the head-mean Q-values."""
        arr = np.atleast_2d(np.asarray(obs, dtype=float))
        q = self.ensemble.mean_q(arr)
        actions = q.argmax(axis=1)
        if np.asarray(obs).ndim == 1:
            return Action(int(actions[0]))
        return actions

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        return self.ensemble.mean_q(np.atleast_2d(np.asarray(obs, dtype=float)))[0]

    def get_params(self) -> dict:
        return dataclasses.asdict(self.config)

    @property
    def updates(self) -> int:
        return self._updates

    # -- checkpoints ---------------------------------------------------------

    def save(self, path):
        """Versioned checkpoint: layer dims, parameter arrays (row-major),
        config echo, and the RNG states."""
        arrays = {}
        for n, net in enumerate(self.ensemble.nets):
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                arrays[f"net{n}_w{i}"] = np.ascontiguousarray(w)
                arrays[f"net{n}_b{i}"] = np.ascontiguousarray(b)
        for n, net in enumerate(self.ensemble.targets):
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                arrays[f"tgt{n}_w{i}"] = np.ascontiguousarray(w)
                arrays[f"tgt{n}_b{i}"] = np.ascontiguousarray(b)
        meta = {
            "format_version": 1,
            "kind": "rem",
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "updates": self._updates,
            "config": self.get_params(),
            "rng": {
                "alpha": self._alpha_rng.bit_generator.state,
                "sample": self._sample_rng.bit_generator.state,
            },
        }
        np.savez(path, meta=json.dumps(meta), **arrays)

    @classmethod
    def load(cls, path) -> "REMAgent":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("kind") != "rem" or meta.get("format_version") != 1:
                raise ValueError(f"not a compatible checkpoint: {path}")
            cfg_dict = dict(meta["config"])
            cfg_dict["hidden"] = tuple(cfg_dict["hidden"])
            cfg = TrainConfig(**cfg_dict)
            agent = cls(cfg, obs_dim=meta["obs_dim"], n_actions=meta["n_actions"])
            for n, net in enumerate(agent.ensemble.nets):
                for i in range(len(net.weights)):
                    net.weights[i] = data[f"net{n}_w{i}"].copy()
                    net.biases[i] = data[f"net{n}_b{i}"].copy()
            for n, net in enumerate(agent.ensemble.targets):
                for i in range(len(net.weights)):
                    net.weights[i] = data[f"tgt{n}_w{i}"].copy()
                    net.biases[i] = data[f"tgt{n}_b{i}"].copy()
            agent._optimizer = _Optimizer(agent.ensemble.parameters(), cfg)
            agent._updates = meta["updates"]
            agent._alpha_rng.bit_generator.state = meta["rng"]["alpha"]
            agent._sample_rng.bit_generator.state = meta["rng"]["sample"]
        return agent


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class BehaviorCloner:
    """Five-way action classifier trained with cross-entropy; the
    imitation-learning baseline."""

    def __init__(self, hidden: tuple[int, ...] = (64, 64), lr: float = 1e-3,
                 batch_size: int = 256, epochs: int = 20, seed: int = 0,
                 holdout: float = 0.2, obs_dim: int = OBSERVATION_DIM,
                 n_actions: int = N_ACTIONS):
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.holdout = holdout
        self.n_actions = n_actions
        self._rng = np.random.default_rng(seed)
        self.net = MLP([obs_dim, *hidden, n_actions], self._rng)
        cfg = TrainConfig(lr=lr, optimizer="adam", grad_clip=10.0)
        self._optimizer = _Optimizer(self.net.parameters(), cfg)
        self.holdout_accuracy: float | None = None
        self.loss_curve: list[float] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "BehaviorCloner":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        if len(X) != len(y):
            raise ValueError("X and y must align")
        if len(np.unique(y)) < 2:
            warnings.warn("behavioral dataset contains a single action class; "
                          "the classifier will be degenerate", UserWarning,
                          stacklevel=2)
        n_hold = int(len(X) * self.holdout)
        perm = self._rng.permutation(len(X))
        hold, train = perm[:n_hold], perm[n_hold:]
        for _ in range(self.epochs):
            order = self._rng.permutation(len(train))
            for lo in range(0, len(order), self.batch_size):
                idx = train[order[lo:lo + self.batch_size]]
                self.loss_curve.append(self._step(X[idx], y[idx]))
        if n_hold:
            self.holdout_accuracy = float(
                (self.predict(X[hold]) == y[hold]).mean())
        return self

    def _step(self, xb: np.ndarray, yb: np.ndarray) -> float:
        out, cache = self.net.forward(xb)
        probs = _softmax(out)
        rows = np.arange(len(xb))
        loss = float(-np.log(probs[rows, yb] + 1e-12).mean())
        grad_out = probs
        grad_out[rows, yb] -= 1.0
        grad_out /= len(xb)
        gw, gb = self.net.backward(cache, grad_out)
        flat = []
        for w, b in zip(gw, gb):
            flat.append(w)
            flat.append(b)
        self._optimizer.step(flat)
        return loss

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.net(np.atleast_2d(np.asarray(X, dtype=float))).argmax(axis=1)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.net(np.atleast_2d(np.asarray(X, dtype=float))))

    def score(self, X: np.ndarray, y: np.ndarray) -> float:
        return float((self.predict(X) == np.asarray(y)).mean())


def clone_behavior(X: np.ndarray, y: np.ndarray,
                   **kwargs) -> BehaviorCloner:
    """Train the behavior-cloning baseline on (encoded state, action) pairs."""
    return BehaviorCloner(**kwargs).fit(X, y)
