"""Mean-field variational network: forward pass, ELBO, gradients, training.

Every scalar parameter (weights and biases) has an independent Gaussian
posterior N(mean, softplus(rho)^2) and a fixed N(0, 1) prior. Hidden layers
use ReLU and the single output unit uses a sigmoid, so the network maps a
feature vector to a propagation probability.

Noise for S Monte-Carlo samples is laid out as an (S, P) array where P is
the parameter count, ordered layer by layer as the row-major weight matrix
followed by the bias vector.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from .core_math import (
    DiagonalGaussian,
    DimensionError,
    LIKELIHOOD_EPS,
    RandomSource,
    bernoulli_log_likelihood,
    inverse_softplus,
    kl_diag_gaussian,
    relu,
    sigmoid,
    softplus,
    softplus_grad,
)

log = logging.getLogger(__name__)

DEFAULT_LAYER_SIZES = (8, 12, 1)
INIT_MEAN_STD = 0.1
INIT_STDDEV = 0.05


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class LayerVariational:
    """Variational parameters of one dense layer (also used for gradients)."""

    weight_mean: np.ndarray
    weight_rho: np.ndarray
    bias_mean: np.ndarray
    bias_rho: np.ndarray

    def __post_init__(self):
        for name in ("weight_mean", "weight_rho", "bias_mean", "bias_rho"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.weight_mean.ndim != 2 or self.weight_rho.shape != self.weight_mean.shape:
            raise DimensionError("weight mean/rho must be matching matrices")
        fan_out = self.weight_mean.shape[1]
        if self.bias_mean.shape != (fan_out,) or self.bias_rho.shape != (fan_out,):
            raise DimensionError("bias vectors must have length fan_out")

    @property
    def fan_in(self) -> int:
        return self.weight_mean.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight_mean.shape[1]

    @property
    def n_params(self) -> int:
        return self.weight_mean.size + self.bias_mean.size

    def arrays(self):
        return [self.weight_mean, self.weight_rho, self.bias_mean, self.bias_rho]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class BnnClassifier:
    layers: list
    prior_mean: float = 0.0
    prior_stddev: float = 1.0

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise DimensionError(
                    f"layer chain broken: {a.fan_out} outputs feed {b.fan_in} inputs")

    @property
    def layer_sizes(self) -> list:
        return [self.layers[0].fan_in] + [layer.fan_out for layer in self.layers]

    @property
    def n_inputs(self) -> int:
        return self.layers[0].fan_in

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def flat_mean(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weight_mean.ravel(), l.bias_mean])
                               for l in self.layers])

    def flat_rho(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weight_rho.ravel(), l.bias_rho])
                               for l in self.layers])

    def posterior(self) -> DiagonalGaussian:
        return DiagonalGaussian(self.flat_mean(), softplus(self.flat_rho()))

    def prior(self) -> DiagonalGaussian:
        n = self.n_params
        return DiagonalGaussian(np.full(n, self.prior_mean), np.full(n, self.prior_stddev))

    def copy(self) -> "BnnClassifier":
        return copy.deepcopy(self)

    def same_as(self, other: "BnnClassifier") -> bool:
        """Bit-for-bit equality of every variational parameter."""
        if self.layer_sizes != other.layer_sizes:
            return False
        if (self.prior_mean, self.prior_stddev) != (other.prior_mean, other.prior_stddev):
            return False
        return all(np.array_equal(a, b)
                   for la, lb in zip(self.layers, other.layers)
                   for a, b in zip(la.arrays(), lb.arrays()))


def init_model(layer_sizes=DEFAULT_LAYER_SIZES, seed: int = 0) -> BnnClassifier:
    """Fresh network: weight means ~ N(0, 0.1^2), bias means 0, stddev 0.05."""
    layer_sizes = [int(n) for n in layer_sizes]
    if len(layer_sizes) < 2 or any(n < 1 for n in layer_sizes):
        raise ValueError(f"invalid layer sizes {layer_sizes}")
    rng = RandomSource(seed).child(0)
    rho0 = float(inverse_softplus(INIT_STDDEV))
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        w = INIT_MEAN_STD * rng.child(i).normal((fan_in, fan_out))
        layers.append(LayerVariational(
            weight_mean=w,
            weight_rho=np.full((fan_in, fan_out), rho0),
            bias_mean=np.zeros(fan_out),
            bias_rho=np.full(fan_out, rho0),
        ))
    return BnnClassifier(layers)


def _split_noise(model: BnnClassifier, eps: np.ndarray):
    """Cut an (S, P) noise array into per-layer (weight, bias) blocks."""
    S = eps.shape[0]
    blocks, k = [], 0
    for layer in model.layers:
        nw = layer.weight_mean.size
        ew = eps[:, k:k + nw].reshape(S, layer.fan_in, layer.fan_out)
        k += nw
        eb = eps[:, k:k + layer.fan_out]
        k += layer.fan_out
        blocks.append((ew, eb))
    return blocks


def _as_noise(model: BnnClassifier, eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.ndim == 1:
        eps = eps[None, :]
    if eps.ndim != 2 or eps.shape[1] != model.n_params:
        raise DimensionError(
            f"noise must have {model.n_params} columns, got shape {eps.shape}")
    return eps


def draw_noise(model: BnnClassifier, S: int, rng: RandomSource) -> np.ndarray:
    """Standard-normal noise for S samples; sample s comes from child stream s."""
    P = model.n_params
    return np.stack([rng.child(s).normal(P) for s in range(S)]) if S else np.zeros((0, P))


def _realize(model: BnnClassifier, eps: np.ndarray):
    """Concrete weights for each noise row: list of (W[S,i,o], b[S,o])."""
    out = []
    for layer, (ew, eb) in zip(model.layers, _split_noise(model, eps)):
        W = layer.weight_mean + softplus(layer.weight_rho) * ew
        b = layer.bias_mean + softplus(layer.bias_rho) * eb
        out.append((W, b))
    return out


def _check_inputs(model: BnnClassifier, x: np.ndarray):
    if x.shape[-1] != model.n_inputs:
        raise DimensionError(
            f"model expects {model.n_inputs} features, got {x.shape[-1]}")


def _forward(weights, X: np.ndarray):
    """Batched pass. Returns output probabilities (S, N) and the activations cache."""
    a = X
    cache = [a]
    last = len(weights) - 1
    for i, (W, b) in enumerate(weights):
        z = np.matmul(a, W) + b[:, None, :]
        if i < last:
            a = relu(z)
            cache.append(z)
            cache.append(a)
        else:
            logits = z[..., 0]
    return sigmoid(logits), cache


def forward_sampled(model: BnnClassifier, x, eps) -> np.ndarray:
    """Score(s) for inputs `x` under the weights picked by noise `eps`.

    `x` is one feature vector or an (N, d) matrix; `eps` is one noise vector
    of length P or an (S, P) array. The result drops the axes that were not
    supplied, so a single x with a single eps gives a scalar-like array.
    """
    x = np.asarray(x, dtype=float)
    _check_inputs(model, x)
    single_x = x.ndim == 1
    single_eps = np.ndim(eps) == 1
    noise = _as_noise(model, eps)
    p, _ = _forward(_realize(model, noise), np.atleast_2d(x))
    if single_x:
        p = p[:, 0]
    if single_eps:
        p = p[0]
    return p


def sample_posterior(model: BnnClassifier, S: int = 1000, rng: RandomSource | None = None,
                     eps=None) -> list:
    """S independent weight realizations, each a list of (weight, bias) per layer."""
    if eps is None:
        if S < 1:
            raise ValueError("need at least one sample")
        eps = draw_noise(model, S, rng)
    noise = _as_noise(model, eps)
    stacked = _realize(model, noise)
    return [[(W[s], b[s]) for W, b in stacked] for s in range(noise.shape[0])]


@dataclass(frozen=True)
class ElboRecord:
    elbo: float
    likelihood_term: float
    kl_term: float


def _kl_term(model: BnnClassifier) -> float:
    return kl_diag_gaussian(model.posterior(), model.prior())


def _elbo_core(model, X, y, eps, kl_scale, want_grad):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty batch")
    if y.shape != (X.shape[0],):
        raise DimensionError("labels must match batch rows")
    _check_inputs(model, X)
    noise = _as_noise(model, eps)
    S = noise.shape[0]
    weights = _realize(model, noise)
    p, cache = _forward(weights, X)
    ll = float(np.sum(bernoulli_log_likelihood(y, p)) / S)
    kl = _kl_term(model)
    record = ElboRecord(ll - kl_scale * kl, ll, kl)
    if not want_grad:
        return record, None

    # d ll / d logit = y - p, zero where the likelihood clamp is active
    inside = (p > LIKELIHOOD_EPS) & (p < 1.0 - LIKELIHOOD_EPS)
    dz = np.where(inside, y - p, 0.0)[..., None] / S
    blocks = _split_noise(model, noise)
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        a_prev = cache[2 * i]
        W, _ = weights[i]
        dW = np.matmul(np.swapaxes(a_prev, -1, -2), dz)
        db = dz.sum(axis=1)
        if i > 0:
            z_prev = cache[2 * i - 1]
            dz = np.matmul(dz, np.swapaxes(W, -1, -2)) * (z_prev > 0)
        layer = model.layers[i]
        ew, eb = blocks[i]
        grads[i] = LayerVariational(
            weight_mean=dW.sum(axis=0),
            weight_rho=(dW * ew).sum(axis=0) * softplus_grad(layer.weight_rho),
            bias_mean=db.sum(axis=0),
            bias_rho=(db * eb).sum(axis=0) * softplus_grad(layer.bias_rho),
        )

    # analytic KL against N(m, s^2): dKL/dmu = (mu - m)/s^2, dKL/dsigma = -1/sigma + sigma/s^2
    m, s2 = model.prior_mean, model.prior_stddev ** 2
    for g, layer in zip(grads, model.layers):
        for mean_name, rho_name in (("weight_mean", "weight_rho"), ("bias_mean", "bias_rho")):
            mu = getattr(layer, mean_name)
            rho = getattr(layer, rho_name)
            sigma = softplus(rho)
            setattr(g, mean_name, getattr(g, mean_name) - kl_scale * (mu - m) / s2)
            setattr(g, rho_name, getattr(g, rho_name)
                    - kl_scale * (-1.0 / sigma + sigma / s2) * softplus_grad(rho))
    return record, grads


def elbo_estimate(model: BnnClassifier, X, y, rng: RandomSource | None = None, S: int = 5,
                  kl_scale: float = 1.0, eps=None) -> ElboRecord:
    """Monte-Carlo ELBO on one batch.

    The likelihood term averages the summed Bernoulli log-likelihood over S
    reparameterized draws; the KL term is analytic. Pass `eps` to freeze the
    noise instead of drawing it from `rng`.
    """
    if eps is None:
        if S < 1:
            raise ValueError("S must be >= 1")
        eps = draw_noise(model, S, rng)
    return _elbo_core(model, X, y, eps, kl_scale, want_grad=False)[0]


def elbo_gradient(model: BnnClassifier, X, y, rng: RandomSource | None = None, S: int = 5,
                  kl_scale: float = 1.0, eps=None) -> list:
    """Exact pathwise gradient of `elbo_estimate` for the same noise draws.

    Returns one LayerVariational per layer holding d elbo / d parameter.
    """
    if eps is None:
        if S < 1:
            raise ValueError("S must be >= 1")
        eps = draw_noise(model, S, rng)
    return _elbo_core(model, X, y, eps, kl_scale, want_grad=True)[1]


def elbo_and_gradient(model, X, y, eps, kl_scale=1.0):
    return _elbo_core(model, X, y, eps, kl_scale, want_grad=True)


@dataclass
class TrainConfig:
    initial_learning_rate: float = 0.5
    decay_rate: float = 0.99
    epochs: int = 300
    batch_size: int | str = "full"
    elbo_mc_samples: int = 5
    kl_scale: float | None = None  # None: 1 / batches per epoch
    seed: int = 0

    def __post_init__(self):
        if not self.initial_learning_rate > 0:
            raise ValueError("initial_learning_rate must be positive")
        if not 0 < self.decay_rate <= 1:
            raise ValueError("decay_rate must be in (0, 1]")
        if self.elbo_mc_samples < 1:
            raise ValueError("elbo_mc_samples must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size != "full" and int(self.batch_size) < 1:
            raise ValueError("batch_size must be positive or 'full'")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    elbo: float
    likelihood: float
    kl: float
    learning_rate: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


class Adam:
    def __init__(self, params, b1=0.9, b2=0.999, eps=1e-8):
        self.params = params
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads, lr):
        """Descent step along `grads` (gradients of the loss), in place."""
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(model: BnnClassifier, X, y, config: TrainConfig | None = None):
    """Maximize the ELBO with Adam and a per-epoch exponential learning-rate decay.

    Returns ``(trained_model, history)``. The input model is not modified.
    """
    config = config or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_inputs(model, X)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")
    model = model.copy()
    history = TrainHistory()
    if config.epochs == 0:
        return model, history

    n = X.shape[0]
    bs = n if config.batch_size == "full" else min(int(config.batch_size), n)
    n_batches = -(-n // bs)
    kl_scale = 1.0 / n_batches if config.kl_scale is None else float(config.kl_scale)
    params = [a for layer in model.layers for a in layer.arrays()]
    opt = Adam(params)
    root = RandomSource(config.seed).child(1)

    for epoch in range(config.epochs):
        lr = config.initial_learning_rate * config.decay_rate ** epoch
        erng = root.child(epoch)
        order = erng.child(0).permutation(n) if n_batches > 1 else np.arange(n)
        tot_elbo = tot_ll = tot_kl = 0.0
        for b in range(n_batches):
            idx = order[b * bs:(b + 1) * bs]
            eps = draw_noise(model, config.elbo_mc_samples, erng.child(b + 1))
            try:
                rec, grads = elbo_and_gradient(model, X[idx], y[idx], eps, kl_scale)
            except ValueError as exc:  # NaN reached an activation
                raise TrainingDivergedError(
                    f"non-finite forward pass at epoch {epoch}, batch {b}: {exc}") from None
            for term in ("elbo", "likelihood_term", "kl_term"):
                if not np.isfinite(getattr(rec, term)):
                    raise TrainingDivergedError(
                        f"non-finite {term} at epoch {epoch}, batch {b}")
            flat = [-a for g in grads for a in g.arrays()]
            if not all(np.all(np.isfinite(a)) for a in flat):
                raise TrainingDivergedError(f"non-finite gradient at epoch {epoch}, batch {b}")
            opt.step(flat, lr)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise TrainingDivergedError(f"non-finite parameters after epoch {epoch}, batch {b}")
            tot_elbo += rec.elbo
            tot_ll += rec.likelihood_term
            tot_kl += rec.kl_term
        history.records.append(EpochRecord(epoch, tot_elbo, tot_ll, tot_kl / n_batches, lr))
        if epoch % 50 == 0:
            log.debug("epoch %d elbo %.4f lr %.4g", epoch, tot_elbo, lr)
    return model, history


@dataclass
class WeightSummary:
    means: list
    stddevs: list


def weight_summary(model: BnnClassifier) -> WeightSummary:
    return WeightSummary(
        means=[layer.weight_mean.copy() for layer in model.layers],
        stddevs=[softplus(layer.weight_rho) for layer in model.layers],
    )


@dataclass
class DensityTable:
    group: str
    bin_centers: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    prior_density: np.ndarray


def prior_posterior_density(model: BnnClassifier, bins: int = 30) -> list:
    """Histogram of the posterior means per parameter group with the prior pdf.

    Groups are named w0, w1, ... for weights and b0, b1, ... for biases. The
    bin range always covers [-3, 3] and every mean, so counts are conserved.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    groups = [(f"w{i}", l.weight_mean.ravel()) for i, l in enumerate(model.layers)]
    groups += [(f"b{i}", l.bias_mean) for i, l in enumerate(model.layers)]
    out = []
    for name, values in groups:
        lo = min(values.min(), model.prior_mean - 3 * model.prior_stddev)
        hi = max(values.max(), model.prior_mean + 3 * model.prior_stddev)
        counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
        centers = 0.5 * (edges[1:] + edges[:-1])
        width = edges[1] - edges[0]
        z = (centers - model.prior_mean) / model.prior_stddev
        prior_pdf = np.exp(-0.5 * z**2) / (model.prior_stddev * np.sqrt(2 * np.pi))
        out.append(DensityTable(name, centers, counts, counts / (values.size * width), prior_pdf))
    return out
