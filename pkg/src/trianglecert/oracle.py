"""Heuristic classicality test: triangle-shaped multilayer perceptrons
trained to reproduce a target distribution.

Three MLPs (one per station) receive the pair of latent inputs their station
sees in the triangle wiring; their softmax outputs are averaged over a latent
batch into a length-64 table.  Training minimizes KL(target || model); the
element-wise mean square error is the reported distance.  Failure to fit is
an indication (not a proof) of nonclassicality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .dist import OutcomeDistribution, mix_with_uniform, triangle_variables
from .errors import DomainError, StateError

ENSEMBLE_LAYERS = (3, 4, 5, 6)
ENSEMBLE_NEURONS = (16, 32)


@dataclass(frozen=True)
class OracleConfig:
    layers: int = 4                 # hidden layers per MLP
    neurons: int = 16               # width of each hidden layer
    batch_size: int = 10_000
    learning_rate: float = 1e-3
    max_epochs: int = 2000
    patience: int = 200
    seed: int = 0
    kl_target: float = 1e-11        # stop early below this loss
    eval_batch_size: int = 50_000   # held-out batch for reported KL/MSE

    def __post_init__(self):
        if self.layers < 1 or self.neurons < 1 or self.batch_size < 1:
            raise DomainError("layers, neurons and batch size must be positive")


def ensemble_configs(base: OracleConfig) -> list[OracleConfig]:
    """The 8 architectures: layers in {3,4,5,6} x neurons in {16,32}."""
    out = []
    for i, layers in enumerate(ENSEMBLE_LAYERS):
        for j, neurons in enumerate(ENSEMBLE_NEURONS):
            out.append(replace(base, layers=layers, neurons=neurons,
                               seed=base.seed + 1000 * (2 * i + j)))
    return out


class Mlp:
    """Plain dense network: ReLU hidden layers, softmax output."""

    def __init__(self, sizes, rng):
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def forward(self, x):
        """Returns per-layer activations; last entry is the softmax output."""
        acts = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
            acts.append(h)
        z = h @ self.weights[-1] + self.biases[-1]
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=1, keepdims=True)
        acts.append(out)
        return acts

    def backward(self, acts, d_out):
        """Gradients for a downstream gradient d_out on the softmax output."""
        out = acts[-1]
        delta = out * (d_out - (d_out * out).sum(axis=1, keepdims=True))
        grads_w, grads_b = [], []
        for layer in range(len(self.weights) - 1, -1, -1):
            a_prev = acts[layer]
            grads_w.append(a_prev.T @ delta)
            grads_b.append(delta.sum(axis=0))
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (acts[layer] > 0)
        grads_w.reverse()
        grads_b.reverse()
        return grads_w, grads_b

    def params(self):
        return self.weights + self.biases

    def set_params(self, flat):
        k = len(self.weights)
        self.weights = [p.copy() for p in flat[:k]]
        self.biases = [p.copy() for p in flat[k:]]

    def to_jsonable(self):
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }


@dataclass
class TriangleOracle:
    """Three station MLPs wired like the triangle: A sees (lam_ab, lam_ac),
    B sees (lam_ab, lam_bc), C sees (lam_ac, lam_bc)."""

    mlp_a: Mlp
    mlp_b: Mlp
    mlp_c: Mlp
    config: OracleConfig

    @classmethod
    def initialized(cls, config: OracleConfig) -> "TriangleOracle":
        rng = np.random.default_rng(config.seed)
        sizes = [2] + [config.neurons] * config.layers + [4]
        return cls(Mlp(sizes, rng), Mlp(sizes, rng), Mlp(sizes, rng), config)

    def station_outputs(self, lams):
        """Softmax outputs of the three stations on a latent batch
        lams = (lam_ab, lam_ac, lam_bc), each (N,)."""
        lab, lac, lbc = lams
        a = self.mlp_a.forward(np.column_stack([lab, lac]))
        b = self.mlp_b.forward(np.column_stack([lab, lbc]))
        c = self.mlp_c.forward(np.column_stack([lac, lbc]))
        return a, b, c

    def to_json(self) -> str:
        return json.dumps({
            "config": {
                "layers": self.config.layers,
                "neurons": self.config.neurons,
                "seed": self.config.seed,
            },
            "A": self.mlp_a.to_jsonable(),
            "B": self.mlp_b.to_jsonable(),
            "C": self.mlp_c.to_jsonable(),
        })


def _latents(n, rng):
    return rng.random(n), rng.random(n), rng.random(n)


def model_table(oracle: TriangleOracle, lams) -> np.ndarray:
    """Averaged outer product of the station outputs on a latent batch."""
    a, b, c = oracle.station_outputs(lams)
    out = np.einsum("ia,ib,ic->abc", a[-1], b[-1], c[-1]) / a[-1].shape[0]
    return out.reshape(-1)


def approximate_distribution(oracle: TriangleOracle, n_batch: int,
                             seed: int) -> OutcomeDistribution:
    rng = np.random.default_rng(seed)
    table = model_table(oracle, _latents(n_batch, rng))
    return OutcomeDistribution(triangle_variables(4), table, atol=1e-9)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / np.maximum(q[mask], 1e-300))).sum())


def mse(p: np.ndarray, q: np.ndarray) -> float:
    return float(((p - q) ** 2).mean())


def kl_and_gradients(oracle: TriangleOracle, target: np.ndarray, lams):
    """KL(target || model) on a fixed latent batch and its gradients with
    respect to every weight of the three MLPs."""
    a, b, c = oracle.station_outputs(lams)
    A, B, C = a[-1], b[-1], c[-1]
    n = A.shape[0]
    q = np.einsum("ia,ib,ic->abc", A, B, C) / n
    p3 = target.reshape(4, 4, 4)
    kl = kl_divergence(p3.reshape(-1), q.reshape(-1))
    g = np.zeros_like(q)
    mask = p3 > 0
    g[mask] = -p3[mask] / np.maximum(q[mask], 1e-300)
    dA = np.einsum("abc,ib,ic->ia", g, B, C) / n
    dB = np.einsum("abc,ia,ic->ib", g, A, C) / n
    dC = np.einsum("abc,ia,ib->ic", g, A, B) / n
    grads = []
    for mlp, acts, d_out in ((oracle.mlp_a, a, dA), (oracle.mlp_b, b, dB),
                             (oracle.mlp_c, c, dC)):
        gw, gb = mlp.backward(acts, d_out)
        grads.append(gw + gb)
    return kl, q.reshape(-1), grads


class Adam:
    def __init__(self, shapes, lr):
        self.lr = lr
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads, b1=0.9, b2=0.999, eps=1e-8):
        self.t += 1
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + eps)


@dataclass(frozen=True)
class TrainResult:
    oracle: TriangleOracle
    kl: float
    mse: float
    epochs_run: int
    kl_init: float
    mse_init: float


def train(target: OutcomeDistribution, config: OracleConfig) -> TrainResult:
    """Adam on KL(target || model) with a fresh latent batch each epoch;
    returns the best-seen weights by training KL, re-scored on a held-out
    latent batch."""
    p = target.probabilities
    if p.size != 64:
        raise DomainError("oracle targets must be 4 x 4 x 4 distributions")
    oracle = TriangleOracle.initialized(config)
    rng = np.random.default_rng(config.seed + 17)
    eval_lams = _latents(config.eval_batch_size,
                         np.random.default_rng(config.seed + 91))

    all_params = (oracle.mlp_a.params() + oracle.mlp_b.params()
                  + oracle.mlp_c.params())
    opt = Adam([w.shape for w in all_params], config.learning_rate)

    q0 = model_table(oracle, eval_lams)
    kl_init, mse_init = kl_divergence(p, q0), mse(p, q0)
    best_kl = np.inf
    best_params = [w.copy() for w in all_params]
    stale = 0
    epochs = 0
    for epoch in range(config.max_epochs):
        epochs = epoch + 1
        lams = _latents(config.batch_size, rng)
        kl, _, grads = kl_and_gradients(oracle, p, lams)
        if not np.isfinite(kl):
            raise StateError(f"training diverged at epoch {epoch}: KL={kl}")
        flat_grads = grads[0] + grads[1] + grads[2]
        if kl < best_kl - 1e-12:
            best_kl = kl
            best_params = [w.copy() for w in all_params]
            stale = 0
        else:
            stale += 1
        if best_kl < config.kl_target or stale > config.patience:
            break
        opt.step(all_params, flat_grads)

    k = len(oracle.mlp_a.params())
    oracle.mlp_a.set_params(best_params[:k])
    oracle.mlp_b.set_params(best_params[k:2 * k])
    oracle.mlp_c.set_params(best_params[2 * k:])
    q = model_table(oracle, eval_lams)
    return TrainResult(oracle, kl_divergence(p, q), mse(p, q), epochs,
                       kl_init, mse_init)


@dataclass(frozen=True)
class SweepResult:
    grid: tuple[float, ...]
    per_arch_mse: np.ndarray        # (len(grid), 8)
    per_arch_kl: np.ndarray
    arch_labels: tuple[str, ...]
    knee: float | None

    @property
    def ensemble_min(self) -> np.ndarray:
        return self.per_arch_mse.min(axis=1)

    def best_arch(self, i: int) -> str:
        return self.arch_labels[int(self.per_arch_mse[i].argmin())]

    def to_csv(self) -> str:
        lines = ["v,arch_id,layers,neurons,final_mse,final_kl"]
        for i, v in enumerate(self.grid):
            for j, label in enumerate(self.arch_labels):
                layers, neurons = label.split("x")
                lines.append(
                    f"{v!r},{j},{layers},{neurons},"
                    f"{float(self.per_arch_mse[i, j])!r},"
                    f"{float(self.per_arch_kl[i, j])!r}"
                )
        return "\n".join(lines) + "\n"


def find_knee(grid, ensemble_min) -> float | None:
    """First grid point whose ensemble-min MSE exceeds 3x the median of the
    values at v <= 0.5."""
    grid = np.asarray(grid, dtype=float)
    ensemble_min = np.asarray(ensemble_min, dtype=float)
    low = ensemble_min[grid <= 0.5]
    if low.size == 0:
        return None
    threshold = 3.0 * np.median(low)
    above = np.flatnonzero(ensemble_min > threshold)
    return float(grid[above[0]]) if above.size else None


def _worker_count() -> int:
    import os

    return max(1, int(os.environ.get("TRIANGLECERT_THREADS", "1")))


def visibility_sweep(target: OutcomeDistribution, grid,
                     base: OracleConfig | None = None,
                     progress=None) -> SweepResult:
    """Train the 8-architecture ensemble on mix(target, v) for every v.

    Ensemble members are independent; with TRIANGLECERT_THREADS > 1 they
    train concurrently (results are seed-determined either way)."""
    base = base or OracleConfig()
    grid = [float(v) for v in grid]
    if any(not 0.0 <= v <= 1.0 for v in grid):
        raise DomainError("visibility grid must lie in [0, 1]")
    configs = ensemble_configs(base)
    labels = tuple(f"{c.layers}x{c.neurons}" for c in configs)
    mse_tab = np.zeros((len(grid), len(configs)))
    kl_tab = np.zeros_like(mse_tab)
    workers = _worker_count()
    for i, v in enumerate(grid):
        mixed = mix_with_uniform(target, v)
        jobs = [replace(cfg, seed=cfg.seed + 101 * i) for cfg in configs]
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda c: train(mixed, c), jobs))
        else:
            results = [train(mixed, c) for c in jobs]
        for j, res in enumerate(results):
            mse_tab[i, j] = res.mse
            kl_tab[i, j] = res.kl
            if progress is not None:
                progress(v, labels[j], res.mse)
    knee = find_knee(grid, mse_tab.min(axis=1))
    return SweepResult(tuple(grid), mse_tab, kl_tab, labels, knee)
