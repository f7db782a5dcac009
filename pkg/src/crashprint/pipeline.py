"""Training, calibration and production phases over a persisted model bundle."""

import json
import logging
import warnings
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import store
from .cluster import ClusterModel, elbow_select, kmeans_fit
from .dec import DecConfig, dec_train
from .embed import TrainConfig, VARIANTS, default_z_len, embed, model_from_arrays, \
    model_to_arrays, train_embedder
from .emerging import assess_many, calibrate_threshold, distance_percentiles
from .errors import InvalidInputError, InvalidStateError, ModelMismatchError
from .ingest import Dataset, MetricVocabulary, build_dataset, build_vocabulary

log = logging.getLogger(__name__)

BUNDLE_VERSION = 1
SCALER_POLICY = "per-trace-per-metric-minmax"


@dataclass
class PipelineConfig:
    t: int = 100
    presence_threshold: float = 0.05
    variant: str = "VAE"
    dec_enabled: bool = True
    z_len: int = None
    epochs: int = 1000
    batch: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    kl_warmup: int = None
    dec_k: int = 20
    dec_iters: int = 2000
    dec_update_interval: int = 140
    dec_lr: float = 1e-4
    k_min: int = 2
    k_max: int = 15
    restarts: int = 10
    percentile: float = 0.95
    seed: int = 0
    app_version: str = ""

    def validate(self):
        problems = []
        if self.t < 1:
            problems.append("t must be >= 1")
        if not 0.0 <= self.presence_threshold <= 1.0:
            problems.append("presence_threshold must be in [0, 1]")
        if self.variant not in VARIANTS:
            problems.append(f"variant must be one of {VARIANTS}")
        if self.z_len is not None and self.z_len < 1:
            problems.append("z_len must be positive")
        if self.kl_warmup is not None and self.kl_warmup < 0:
            problems.append("kl_warmup must be >= 0")
        if self.epochs < 0 or self.batch < 1 or self.lr < 0:
            problems.append("epochs >= 0, batch >= 1 and lr >= 0 required")
        if self.dec_k < 2 or self.dec_iters < 0 or self.dec_update_interval < 1 or self.dec_lr < 0:
            problems.append("invalid DEC settings")
        if not 2 <= self.k_min <= self.k_max:
            problems.append("need 2 <= k_min <= k_max")
        if not 0.0 <= self.percentile <= 1.0:
            problems.append("percentile must be a fraction in [0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            problems.append("optimizer must be adam or sgd")
        if problems:
            raise InvalidInputError("; ".join(problems))
        return self

    def to_json(self):
        return asdict(self)

    @property
    def hash(self):
        return store.digest(self.to_json())[:16]

    @property
    def resolved_kl_warmup(self):
        """VAE KL annealing length in epochs; defaults to a quarter of training."""
        return self.epochs // 4 if self.kl_warmup is None else self.kl_warmup

    def resolved_z_len(self, input_dim):
        return self.z_len or default_z_len(self.variant, input_dim)

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping).validate()

    @classmethod
    def load(cls, path):
        import yaml
        with open(path) as fh:
            data = yaml.safe_load(fh) if str(path).endswith((".yml", ".yaml")) else json.load(fh)
        return cls.from_mapping(data or {})

    def override(self, **changes):
        return replace(self, **{k: v for k, v in changes.items() if v is not None}).validate()


@dataclass
class ModelBundle:
    config: PipelineConfig
    vocabulary: MetricVocabulary
    model: object
    dec_centroids: np.ndarray = None
    cluster_model: ClusterModel = None
    elbow_curve: list = None
    train_loss: list = None
    dec_refresh_losses: list = None

    @property
    def calibrated(self):
        return self.cluster_model is not None and self.cluster_model.calibrated

    def require_calibrated(self):
        if not self.calibrated:
            raise InvalidStateError("bundle is not calibrated; run `calibrate` first")

    def check_dataset(self, dataset):
        if dataset.vocabulary.hash != self.vocabulary.hash:
            raise ModelMismatchError(
                f"tensors use vocabulary {dataset.vocabulary.hash}, model expects {self.vocabulary.hash}")
        if dataset.t != self.config.t:
            raise ModelMismatchError(f"tensors have t={dataset.t}, model expects t={self.config.t}")

    # -- persistence --------------------------------------------------------
    def to_bytes(self):
        embed_header, arrays = model_to_arrays(self.model)
        header = {
            "bundle_version": BUNDLE_VERSION,
            "app_version": self.config.app_version,
            "config": self.config.to_json(),
            "config_hash": self.config.hash,
            "vocabulary": self.vocabulary.to_json(),
            "vocabulary_hash": self.vocabulary.hash,
            "preprocessing": {"t": self.config.t, "scaler": SCALER_POLICY,
                              "presence_threshold": self.config.presence_threshold},
            "seed": self.config.seed,
            "embedder": embed_header,
            "train_loss": [float(v) for v in (self.train_loss or [])],
            "dec": None,
            "cluster": None,
        }
        if self.dec_centroids is not None:
            header["dec"] = {"k": int(self.dec_centroids.shape[0]),
                             "refresh_losses": [float(v) for v in self.dec_refresh_losses or []]}
            arrays["dec.centroids"] = np.asarray(self.dec_centroids, dtype=np.float64)
        if self.cluster_model is not None:
            cm = self.cluster_model
            header["cluster"] = {"k_prime": cm.k_prime, "percentile": cm.percentile,
                                 "threshold": cm.threshold,
                                 "distance_percentiles": cm.distance_percentiles,
                                 "elbow": [asdict(r) for r in self.elbow_curve or []]}
            arrays["cluster.centroids"] = np.asarray(cm.centroids, dtype=np.float64)
        return store.dumps("model", header, arrays)

    def save(self, path):
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)

    @classmethod
    def from_bytes(cls, data):
        from .cluster import MetricRow
        header, arrays = store.loads(data, kind="model")
        if header["bundle_version"] != BUNDLE_VERSION:
            raise InvalidInputError(f"unsupported bundle version {header['bundle_version']}")
        config = PipelineConfig.from_mapping(header["config"])
        if config.hash != header["config_hash"]:
            raise ModelMismatchError("bundle config hash does not match its config")
        vocab = MetricVocabulary.from_json(header["vocabulary"])
        if vocab.hash != header["vocabulary_hash"]:
            raise ModelMismatchError("bundle vocabulary hash does not match its names")
        model = model_from_arrays(header["embedder"], arrays)
        model.vocabulary_hash = vocab.hash
        bundle = cls(config, vocab, model, train_loss=header["train_loss"])
        if header["dec"] is not None:
            bundle.dec_centroids = arrays["dec.centroids"]
            bundle.dec_refresh_losses = header["dec"]["refresh_losses"]
        if header["cluster"] is not None:
            c = header["cluster"]
            bundle.cluster_model = ClusterModel(c["k_prime"], arrays["cluster.centroids"],
                                                c["distance_percentiles"], c["percentile"],
                                                c["threshold"])
            bundle.elbow_curve = [MetricRow(**r) for r in c["elbow"]]
        return bundle

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# -- phases -------------------------------------------------------------------

def preprocess(traces, config, vocabulary=None, split="train"):
    """Homogenize raw traces; builds the vocabulary when none is supplied."""
    if not traces:
        raise InvalidInputError("no traces to preprocess")
    vocab = vocabulary or build_vocabulary(traces, config.presence_threshold)
    return build_dataset(traces, vocab, config.t, split)


def train(dataset, config):
    """Train the embedder and, when enabled, refine it with DEC."""
    config.validate()
    if dataset.t != config.t:
        raise ModelMismatchError(f"tensors have t={dataset.t}, config says t={config.t}")
    x = dataset.stacked()
    tc = TrainConfig(variant=config.variant, epochs=config.epochs, batch=config.batch,
                     lr=config.lr, seed=config.seed, z_len=config.resolved_z_len(x.shape[1]),
                     optimizer=config.optimizer, kl_warmup=config.resolved_kl_warmup)
    if config.dec_enabled and len(dataset) < config.dec_k:
        raise InvalidInputError(
            f"DEC needs at least dec_k={config.dec_k} training sessions, got {len(dataset)}")
    result = train_embedder(dataset, tc)
    bundle = ModelBundle(config, dataset.vocabulary, result.model, train_loss=result.loss_curve)
    if config.dec_enabled:
        refine(bundle, dataset)
    return bundle


def refine(bundle, dataset):
    """DEC phase: seed dec_k centroids with K-Means, then refine encoder and centroids in place."""
    config = bundle.config
    z = embed(bundle.model, dataset)
    init = kmeans_fit(z, config.dec_k, seed=config.seed, restarts=config.restarts)
    dc = DecConfig(iters=config.dec_iters, update_interval=config.dec_update_interval,
                   lr=config.dec_lr, batch=config.batch, seed=config.seed)
    out = dec_train(bundle.model, dataset.stacked(), init.centroids, dc)
    bundle.dec_centroids = out.centroids
    bundle.dec_refresh_losses = out.refresh_losses
    return bundle


def calibrate(bundle, dataset, k_range=None):
    """Elbow-select k' on validation embeddings, fit K-Means, record distance threshold."""
    bundle.check_dataset(dataset)
    cfg = bundle.config
    z = embed(bundle.model, dataset)
    lo, hi = (cfg.k_min, cfg.k_max) if k_range is None else (min(k_range), max(k_range))
    if hi > len(dataset) - 1:
        warnings.warn(f"k range capped at n-1={len(dataset) - 1}", RuntimeWarning)
        hi = len(dataset) - 1
    if lo > hi:
        raise InvalidInputError(f"validation set of {len(dataset)} sessions is too small for k>={lo}")
    k_prime, curve, fits = elbow_select(z, range(lo, hi + 1), seed=cfg.seed, restarts=cfg.restarts)
    centroids = fits[k_prime].centroids
    cm = ClusterModel(k_prime, centroids, distance_percentiles(z, centroids), cfg.percentile,
                      calibrate_threshold(z, centroids, cfg.percentile))
    bundle.cluster_model = cm
    bundle.elbow_curve = curve
    labels, _ = cm.assign(z)
    return bundle, labels


def as_dataset(bundle, data, split="production"):
    if isinstance(data, Dataset):
        bundle.check_dataset(data)
        return data
    return build_dataset(list(data), bundle.vocabulary, bundle.config.t, split)


def assign(bundle, data):
    """Cluster labels (nearest calibrated centroid) for traces or tensors."""
    bundle.require_calibrated()
    ds = as_dataset(bundle, data)
    labels, _ = bundle.cluster_model.assign(embed(bundle.model, ds))
    return ds, labels


def detect(bundle, data):
    bundle.require_calibrated()
    ds = as_dataset(bundle, data)
    return assess_many(embed(bundle.model, ds), bundle.cluster_model, ds.session_ids)
