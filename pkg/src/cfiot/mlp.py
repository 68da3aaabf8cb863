"""Per-AP power predictor: a [khat, 4, 4, 4, 1] perceptron trained with
Levenberg-Marquardt on max-min optimal downlink powers.

Inputs are the ``khat`` largest large-scale coefficients of an AP, in dB
and standardized with training-set statistics stored in the model.  The
hidden layers use tanh; the output is rectified and clamped to 1 at
inference.  Training fits the pre-rectifier output, whose Jacobian never
vanishes, to targets that already lie in [0, 1].
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .channel import generate_pilots
from .dl_power import FEAS_TOL, REL_TOL, maxmin_bisection
from .errors import ConfigError, SolverError, TrainingError
from .estimator import projection_vectors
from .netgen import NetworkConfig, generate_network
from .seeds import realization_seeds, substream

log = logging.getLogger(__name__)

HIDDEN = (4, 4, 4)
KHAT = 4
FORMAT_VERSION = 1


def top_khat(beta_row, khat):
    """The ``khat`` largest entries of one AP's row, in descending order."""
    beta_row = np.asarray(beta_row, dtype=float)
    if khat > beta_row.shape[-1]:
        raise ConfigError(f"khat={khat} exceeds the number of devices {beta_row.shape[-1]}")
    if khat < 1:
        raise ConfigError("khat must be >= 1")
    return -np.sort(-beta_row, axis=-1)[..., :khat]


@dataclass
class TrainingSet:
    inputs: np.ndarray  # (N, khat) raw beta, descending per row
    targets: np.ndarray  # (N,)
    provenance: np.ndarray  # (N, 2) int: realization seed, AP index

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.targets.shape[0]:
            raise ConfigError("inputs and targets disagree in length")

    def __len__(self):
        return self.targets.shape[0]

    def subset(self, idx):
        return TrainingSet(self.inputs[idx], self.targets[idx], self.provenance[idx])


@dataclass
class MlpModel:
    sizes: list
    weights: list  # per layer, shape (fan_out, fan_in)
    biases: list  # per layer, shape (fan_out,)
    x_mean: np.ndarray
    x_std: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def khat(self):
        return self.sizes[0]

    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_dict(self):
        return {
            "format": "cfiot-mlp",
            "version": FORMAT_VERSION,
            "sizes": list(self.sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "cfiot-mlp" or d.get("version") != FORMAT_VERSION:
            raise ConfigError("not a cfiot-mlp model file of a supported version")
        sizes = list(d["sizes"])
        if sizes[1:] != [*HIDDEN, 1]:
            raise ConfigError(f"unsupported architecture {sizes}")
        return cls(sizes=sizes,
                   weights=[np.asarray(w, dtype=float).reshape(sizes[i + 1], sizes[i])
                            for i, w in enumerate(d["weights"])],
                   biases=[np.asarray(b, dtype=float) for b in d["biases"]],
                   x_mean=np.asarray(d["x_mean"], dtype=float),
                   x_std=np.asarray(d["x_std"], dtype=float),
                   meta=d.get("meta", {}))


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)


def load_model(path):
    with open(path) as fh:
        return MlpModel.from_dict(json.load(fh))


def init_model(khat=KHAT, seed=None, x_mean=None, x_std=None, out_bias=0.0):
    """Weights uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; biases zero
    except the output bias."""
    rng = np.random.default_rng(seed)
    sizes = [khat, *HIDDEN, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    biases[-1][:] = out_bias
    return MlpModel(sizes=sizes, weights=weights, biases=biases,
                    x_mean=np.zeros(khat) if x_mean is None else np.asarray(x_mean, float),
                    x_std=np.ones(khat) if x_std is None else np.asarray(x_std, float))


def _normalize(model, beta_bar):
    beta_bar = np.asarray(beta_bar, dtype=float)
    if np.any(beta_bar <= 0):
        raise ConfigError("large-scale coefficients must be positive")
    return (10 * np.log10(beta_bar) - model.x_mean) / model.x_std


def _flatten(model):
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(model.weights, model.biases)])


def _unflatten(model, theta):
    weights, biases, i = [], [], 0
    for w, b in zip(model.weights, model.biases):
        weights.append(theta[i:i + w.size].reshape(w.shape))
        i += w.size
        biases.append(theta[i:i + b.size].copy())
        i += b.size
    return MlpModel(sizes=model.sizes, weights=weights, biases=biases,
                    x_mean=model.x_mean, x_std=model.x_std, meta=dict(model.meta))


def _raw(model, xn):
    """Pre-rectifier output and the hidden activations, for (N, khat) input."""
    acts = [xn]
    h = xn
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ w.T + b)
        acts.append(h)
    z = h @ model.weights[-1].T + model.biases[-1]
    return z[:, 0], acts


def _jacobian(model, acts):
    """d z / d theta for every sample, in :func:`_flatten` order."""
    n = acts[0].shape[0]
    blocks = [None] * len(model.weights)
    delta = np.ones((n, 1))  # dz / d(pre-activation) of the current layer
    for layer in range(len(model.weights) - 1, -1, -1):
        a_in = acts[layer]
        dW = (delta[:, :, None] * a_in[:, None, :]).reshape(n, -1)
        blocks[layer] = np.hstack([dW, delta])
        if layer > 0:
            delta = (delta @ model.weights[layer]) * (1.0 - a_in ** 2)
    return np.hstack(blocks)


def forward(model, beta_bar):
    """Predicted normalized AP power in [0, 1] for one input or a batch."""
    beta_bar = np.asarray(beta_bar, dtype=float)
    single = beta_bar.ndim == 1
    z, _ = _raw(model, np.atleast_2d(_normalize(model, beta_bar)))
    p = np.minimum(np.maximum(z, 0.0), 1.0)
    return float(p[0]) if single else p


def predict_powers(model, beta):
    """Per-AP prediction for an (M, K) large-scale matrix; each AP uses only its own row."""
    return forward(model, top_khat(beta, model.khat))


def _split(n, val_frac, seed):
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(val_frac * n)) if n > 1 else 0
    return perm[n_val:], perm[:n_val]


def train_lm(dataset, init_seed=0, max_epochs=500, lambda0=1e-3, val_frac=0.1, grad_tol=1e-8,
             lambda_max=1e10, khat=None):
    """Fit a model to ``dataset`` by Levenberg-Marquardt on the mean squared error.

    Each step solves ``(J^T J + lambda I) delta = J^T r``; a step that lowers
    the loss is accepted and ``lambda`` shrinks tenfold, otherwise it is
    rejected and ``lambda`` grows tenfold.  The split into training and
    validation parts is deterministic in ``init_seed``.
    """
    if len(dataset) == 0:
        raise TrainingError("empty training set")
    khat = dataset.inputs.shape[1] if khat is None else khat
    tr, va = _split(len(dataset), val_frac, init_seed)
    train = dataset.subset(tr)
    x_db = 10 * np.log10(train.inputs)
    mean = x_db.mean(axis=0)
    std = x_db.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    y = train.targets
    model = init_model(khat, seed=init_seed, x_mean=mean, x_std=std, out_bias=float(y.mean()))
    xn = _normalize(model, train.inputs)
    n = len(y)

    def loss_of(m):
        z, acts = _raw(m, xn)
        r = z - y
        return float(r @ r) / n, r, acts

    theta = _flatten(model)
    loss, r, acts = loss_of(model)
    history = [loss]
    lam = lambda0
    epochs = 0
    reason = "max_epochs"
    eye = np.eye(theta.size)
    while epochs < max_epochs:
        J = _jacobian(model, acts)
        g = J.T @ r
        if np.linalg.norm(g) / n < grad_tol:
            reason = "gradient"
            break
        H = J.T @ J
        accepted = False
        while lam <= lambda_max:
            try:
                step = cho_solve(cho_factor(H + lam * eye), g)
            except LinAlgError:
                lam *= 10
                continue
            cand = _unflatten(model, theta - step)
            c_loss, c_r, c_acts = loss_of(cand)
            if c_loss < loss:
                theta, model, loss, r, acts = theta - step, cand, c_loss, c_r, c_acts
                lam = max(lam / 10, 1e-12)
                accepted = True
                break
            lam *= 10
        if not accepted:
            reason = "lambda"
            break
        history.append(loss)
        epochs += 1
    if not np.isfinite(loss):
        raise TrainingError("training diverged")

    meta = {"epochs": epochs, "stop": reason, "train_mse": loss, "loss_history": history,
            "n_train": int(n), "n_val": int(len(va)), "init_seed": int(init_seed)}
    if len(va):
        val = dataset.subset(va)
        meta["val_rmse"] = float(np.sqrt(np.mean((forward(model, val.inputs) - val.targets) ** 2)))
    model.meta = meta
    log.info("LM training stopped (%s) after %d epochs, train mse %.3g", reason, epochs, loss)
    return model


def realization_sample(config, seed, khat, rel_tol=REL_TOL, feas_tol=FEAS_TOL):
    """Optimal per-AP powers for one wrapped-around realization.

    Returns
    -------
    inputs : (M, khat), targets : (M,), beta : (M, K)
    """
    net = generate_network(config, seed=substream(seed, 0))
    psi = generate_pilots(config.K, config.tau, substream(seed, 1))
    _, gamma = projection_vectors(psi, net.beta, config.rho_p)
    res = maxmin_bisection(gamma, net.beta, config.rho_d, rel_tol, feas_tol)
    return top_khat(net.beta, khat), np.clip(res.p_opt, 0.0, 1.0), net.beta


def build_dataset(config: NetworkConfig, n_realizations, khat=KHAT, seed=0, seeds=None,
                  rel_tol=REL_TOL, feas_tol=FEAS_TOL, shuffle=True):
    """Training samples ``(top_khat(beta_m), p_m^opt)`` from solved realizations.

    ``seeds`` overrides the per-realization seeds derived from ``seed``.
    """
    config = config.replace(wrap_around=True)
    if khat > config.K:
        raise ConfigError(f"khat={khat} exceeds K={config.K}")
    seeds = realization_seeds(seed, n_realizations) if seeds is None else list(seeds)
    xs, ys, prov = [], [], []
    for rs in seeds:
        try:
            x, y, _ = realization_sample(config, rs, khat, rel_tol, feas_tol)
        except SolverError as exc:
            raise SolverError(f"realization seed {rs}: {exc}") from exc
        xs.append(x)
        ys.append(y)
        prov.append(np.column_stack([np.full(config.M, rs, dtype=np.int64), np.arange(config.M)]))
    ds = TrainingSet(np.vstack(xs), np.concatenate(ys), np.vstack(prov))
    if shuffle:
        ds = ds.subset(np.random.default_rng(seed).permutation(len(ds)))
    return ds


def fit_exponential(beta_max, p):
    """Baseline ``p = min(1, a exp(b beta_max_dB))`` by least squares on ``log p``.

    Returns a callable mapping ``beta_max`` to predicted powers.
    """
    beta_max = np.asarray(beta_max, dtype=float)
    p = np.asarray(p, dtype=float)
    keep = p > 0
    if keep.sum() < 2:
        raise TrainingError("need at least two positive targets")
    x = 10 * np.log10(beta_max[keep])
    b, log_a = np.polyfit(x, np.log(p[keep]), 1)
    return lambda bm: np.minimum(1.0, np.exp(log_a + b * 10 * np.log10(np.asarray(bm, float))))
