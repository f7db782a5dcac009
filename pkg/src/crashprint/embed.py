"""Stacking autoencoder and stacking variational autoencoder.

Both consume column-stacked traces (length t*m) and produce a fixed-length
embedding. The AE embedding is the bottleneck activation; the VAE embedding
is the posterior mean, so inference never samples.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ModelMismatchError, TrainingDivergedError
from .ingest import Dataset
from .numerics import Dense, Network, Rng, make_optimizer

log = logging.getLogger(__name__)

VARIANTS = ("AE", "VAE")
AE_REDUCTION = 64
VAE_Z_LEN = 256
HIDDEN_REDUCTION = 8
LOGVAR_CLAMP = 10.0


def default_z_len(variant, input_dim):
    if variant == "AE":
        return max(input_dim // AE_REDUCTION, 1)
    if variant == "VAE":
        return VAE_Z_LEN
    raise InvalidInputError(f"unknown variant {variant!r}")


def mse_loss(x, x_hat):
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise InvalidInputError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    return float(np.mean((x - x_hat) ** 2))


def gaussian_kl(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over the last axis."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return 0.5 * np.sum(mu * mu + np.exp(logvar) - 1.0 - logvar, axis=-1)


def reparameterize(mu, logvar, rng):
    mu = np.asarray(mu)
    logvar = np.asarray(logvar)
    if mu.shape != logvar.shape:
        raise InvalidInputError("mu and logvar must have the same shape")
    eps = rng.normal(mu.shape, dtype=mu.dtype)
    return mu + np.exp(0.5 * logvar) * eps, eps


class Autoencoder:
    variant = "AE"

    def __init__(self, encoder, decoder):
        if decoder.n_out != encoder.n_in or decoder.n_in != encoder.n_out:
            raise InvalidInputError("decoder must mirror encoder dimensions")
        self.encoder = encoder
        self.decoder = decoder
        self.vocabulary_hash = None

    @classmethod
    def build(cls, input_dim, z_len=None, hidden=None, rng=None, dtype=np.float32):
        rng = rng or Rng(0)
        z_len = z_len or default_z_len("AE", input_dim)
        hidden = hidden or max(input_dim // HIDDEN_REDUCTION, z_len)
        enc = Network([Dense.xavier(input_dim, hidden, "relu", rng, dtype),
                       Dense.xavier(hidden, z_len, "linear", rng, dtype)])
        dec = Network([Dense.xavier(z_len, hidden, "relu", rng, dtype),
                       Dense.xavier(hidden, input_dim, "sigmoid", rng, dtype)])
        return cls(enc, dec)

    @property
    def input_dim(self):
        return self.encoder.n_in

    @property
    def z_len(self):
        return self.encoder.n_out

    def networks(self):
        return {"encoder": self.encoder, "decoder": self.decoder}

    def params(self):
        return self.encoder.params() + self.decoder.params()

    def encoder_params(self):
        return self.encoder.params()

    def touch(self):
        for net in self.networks().values():
            net.touch()

    def encode(self, x):
        return self.encoder.forward(x)

    def encode_backward(self, cache, dz):
        grads, _ = self.encoder.backward(cache, dz)
        return grads

    def reconstruct(self, x):
        return self.decoder(self.encoder(x))

    def loss_and_grads(self, x, rng=None, kl_weight=1.0):
        """Batch-mean MSE and gradients for every parameter in `params()` order."""
        z, enc_tape = self.encoder.forward(x)
        x_hat, dec_tape = self.decoder.forward(z)
        diff = x_hat.astype(np.float64) - x
        loss = float(np.mean(diff ** 2))
        g = (2.0 / diff.size) * diff
        dec_grads, dz = self.decoder.backward(dec_tape, g.astype(x_hat.dtype))
        enc_grads, _ = self.encoder.backward(enc_tape, dz)
        return loss, {"reconstruction": loss}, enc_grads + dec_grads

    def astype(self, dtype):
        return Autoencoder(self.encoder.astype(dtype), self.decoder.astype(dtype))


class VariationalAutoencoder:
    """Shared relu trunk (input/8) feeding mean and log-variance heads."""

    variant = "VAE"

    def __init__(self, trunk, mu_head, logvar_head, decoder):
        if mu_head.n_out != logvar_head.n_out:
            raise InvalidInputError("mean and log-variance heads must have equal length")
        if decoder.n_out != trunk.n_in or decoder.n_in != mu_head.n_out:
            raise InvalidInputError("decoder must map z back to the input width")
        self.trunk = trunk
        self.mu_head = mu_head
        self.logvar_head = logvar_head
        self.decoder = decoder
        self.vocabulary_hash = None

    @classmethod
    def build(cls, input_dim, z_len=None, hidden=None, rng=None, dtype=np.float32):
        rng = rng or Rng(0)
        z_len = z_len or default_z_len("VAE", input_dim)
        hidden = hidden or max(input_dim // HIDDEN_REDUCTION, 1)
        trunk = Network([Dense.xavier(input_dim, hidden, "relu", rng, dtype)])
        mu = Network([Dense.xavier(hidden, z_len, "linear", rng, dtype)])
        logvar = Network([Dense.xavier(hidden, z_len, "linear", rng, dtype)])
        dec = Network([Dense.xavier(z_len, hidden, "relu", rng, dtype),
                       Dense.xavier(hidden, input_dim, "sigmoid", rng, dtype)])
        return cls(trunk, mu, logvar, dec)

    @property
    def input_dim(self):
        return self.trunk.n_in

    @property
    def z_len(self):
        return self.mu_head.n_out

    def networks(self):
        return {"trunk": self.trunk, "mu_head": self.mu_head,
                "logvar_head": self.logvar_head, "decoder": self.decoder}

    def params(self):
        return (self.trunk.params() + self.mu_head.params()
                + self.logvar_head.params() + self.decoder.params())

    def encoder_params(self):
        return self.trunk.params() + self.mu_head.params()

    def touch(self):
        for net in self.networks().values():
            net.touch()

    def posterior(self, x):
        h = self.trunk(x)
        lv = np.clip(self.logvar_head(h), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        return self.mu_head(h), lv

    def encode(self, x):
        h, trunk_tape = self.trunk.forward(x)
        mu, mu_tape = self.mu_head.forward(h)
        return mu, (trunk_tape, mu_tape)

    def encode_backward(self, cache, dz):
        trunk_tape, mu_tape = cache
        mu_grads, dh = self.mu_head.backward(mu_tape, dz)
        trunk_grads, _ = self.trunk.backward(trunk_tape, dh)
        return trunk_grads + mu_grads

    def reconstruct(self, x):
        return self.decoder(self.mu_head(self.trunk(x)))

    def loss_and_grads(self, x, rng, eps=None, kl_weight=1.0):
        """Batch-mean negative ELBO: 0.5*sum squared error + kl_weight * Gaussian KL.

        `eps` overrides the reparameterization noise (gradient checks need
        the same draw at every perturbation). `kl_weight` below 1 is only
        used during warm-up.
        """
        h, trunk_tape = self.trunk.forward(x)
        mu, mu_tape = self.mu_head.forward(h)
        lv_raw, lv_tape = self.logvar_head.forward(h)
        lv = np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
        if eps is None:
            eps = rng.normal(mu.shape, dtype=mu.dtype)
        std = np.exp(0.5 * lv)
        z = mu + std * eps
        x_hat, dec_tape = self.decoder.forward(z)
        n = x.shape[0]
        diff = x_hat.astype(np.float64) - x
        recon = 0.5 * float(np.sum(diff ** 2)) / n
        kl = float(np.sum(gaussian_kl(mu, lv))) / n
        loss = recon + kl_weight * kl
        if not np.isfinite(loss):
            raise TrainingDivergedError("non-finite ELBO")
        dec_grads, dz = self.decoder.backward(dec_tape, (diff / n).astype(x_hat.dtype))
        dmu = dz + kl_weight * mu / n
        dlv = dz * eps * 0.5 * std + kl_weight * 0.5 * (np.exp(lv) - 1.0) / n
        dlv = dlv * (np.abs(lv_raw) < LOGVAR_CLAMP)
        mu_grads, dh_mu = self.mu_head.backward(mu_tape, dmu.astype(mu.dtype))
        lv_grads, dh_lv = self.logvar_head.backward(lv_tape, dlv.astype(mu.dtype))
        trunk_grads, _ = self.trunk.backward(trunk_tape, dh_mu + dh_lv)
        grads = trunk_grads + mu_grads + lv_grads + dec_grads
        return loss, {"reconstruction": recon, "kl": kl}, grads

    def astype(self, dtype):
        return VariationalAutoencoder(self.trunk.astype(dtype), self.mu_head.astype(dtype),
                                      self.logvar_head.astype(dtype), self.decoder.astype(dtype))


def elbo_loss(model, x, rng):
    """Negative ELBO for one vector or a batch; returns (loss, {reconstruction, kl})."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    loss, parts, _ = model.loss_and_grads(x, rng)
    return loss, parts


def build_model(variant, input_dim, z_len=None, rng=None, dtype=np.float32):
    if variant == "AE":
        return Autoencoder.build(input_dim, z_len, rng=rng, dtype=dtype)
    if variant == "VAE":
        return VariationalAutoencoder.build(input_dim, z_len, rng=rng, dtype=dtype)
    raise InvalidInputError(f"unknown variant {variant!r}")


@dataclass
class TrainConfig:
    variant: str = "VAE"
    epochs: int = 1000
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0
    z_len: int = None
    optimizer: str = "adam"
    kl_warmup: int = 0


@dataclass
class TrainResult:
    model: object
    loss_curve: list = field(default_factory=list)


def _as_matrix(data):
    if isinstance(data, Dataset):
        return data.stacked()
    x = np.asarray(data)
    if x.ndim != 2:
        raise InvalidInputError("training data must be a Dataset or an (n, t*m) matrix")
    return x


def train_embedder(data, config, vocabulary_hash=None):
    x = _as_matrix(data).astype(np.float32)
    if x.shape[0] == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    if isinstance(data, Dataset):
        vocabulary_hash = data.vocabulary.hash
    rng = Rng(config.seed)
    model = build_model(config.variant, x.shape[1], config.z_len, rng=rng.spawn(1))
    model.vocabulary_hash = vocabulary_hash
    opt = make_optimizer(config.optimizer, config.lr)
    order_rng = rng.spawn(2)
    noise_rng = rng.spawn(3)
    params = model.params()
    curve = []
    n = x.shape[0]
    for epoch in range(config.epochs):
        # linear KL annealing keeps the VAE posterior from collapsing early on
        kl_weight = min(1.0, (epoch + 1) / config.kl_warmup) if config.kl_warmup else 1.0
        order = order_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch):
            idx = order[start:start + config.batch]
            try:
                loss, _, grads = model.loss_and_grads(x[idx], noise_rng, kl_weight=kl_weight)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(str(exc), epoch) from exc
            if not np.isfinite(loss):
                raise TrainingDivergedError("non-finite loss", epoch)
            opt.step(params, grads, epoch)
            model.touch()
            total += loss * len(idx)
        curve.append(total / n)
        if epoch % 100 == 0:
            log.debug("epoch %d loss %.6f", epoch, curve[-1])
    return TrainResult(model, curve)


def embed_matrix(model, x):
    x = np.asarray(x, dtype=model.params()[0].dtype)
    z, _ = model.encode(x)
    return z.astype(np.float64)


def embed(model, data):
    """Deterministic embeddings for a Dataset, an (n, t*m) matrix, or one stacked vector."""
    if isinstance(data, Dataset):
        if model.vocabulary_hash is not None and data.vocabulary.hash != model.vocabulary_hash:
            raise ModelMismatchError(
                f"dataset vocabulary {data.vocabulary.hash} != model vocabulary {model.vocabulary_hash}")
        x = data.stacked()
    else:
        x = np.asarray(data)
    if x.ndim == 1:
        return embed_matrix(model, x[None, :])[0]
    if x.shape[1] != model.input_dim:
        raise ModelMismatchError(f"input width {x.shape[1]} != model input {model.input_dim}")
    return embed_matrix(model, x)


# -- persistence helpers ----------------------------------------------------

def model_to_arrays(model, prefix="embed"):
    header = {"variant": model.variant, "z_len": model.z_len, "input_dim": model.input_dim,
              "networks": {}}
    arrays = {}
    for net_name, net in model.networks().items():
        specs = []
        for i, layer in enumerate(net.layers):
            specs.append({"shape": [layer.n_out, layer.n_in], "activation": layer.activation})
            arrays[f"{prefix}.{net_name}.{i}.weights"] = layer.weights.reshape(-1)
            arrays[f"{prefix}.{net_name}.{i}.bias"] = layer.bias
        header["networks"][net_name] = specs
    return header, arrays


def model_from_arrays(header, arrays, prefix="embed"):
    nets = {}
    for net_name, specs in header["networks"].items():
        layers = []
        for i, spec in enumerate(specs):
            w = arrays[f"{prefix}.{net_name}.{i}.weights"].reshape(spec["shape"]).copy()
            b = arrays[f"{prefix}.{net_name}.{i}.bias"].copy()
            layers.append(Dense(w, b, spec["activation"]))
        nets[net_name] = Network(layers)
    if header["variant"] == "AE":
        return Autoencoder(nets["encoder"], nets["decoder"])
    if header["variant"] == "VAE":
        return VariationalAutoencoder(nets["trunk"], nets["mu_head"], nets["logvar_head"],
                                      nets["decoder"])
    raise InvalidInputError(f"unknown variant {header['variant']!r}")
