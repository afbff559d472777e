"""Approach 1 (multi-label MLP) and Approach 2 (k-means codebook + classifier)."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..array_model import ArrayConfig, CutEvaluator, WeightMatrix
from ..dataset import Dataset, FeatureScaler, fit_scaler
from ..ga import expand_quadrant
from ..objective import BeamSpec, CostWeights, cost
from .kmeans import KMeansModel, elbow_sweep, kmeans_fit, pick_knee
from .metrics import MultilabelScores, multilabel_metrics
from .nn import MlpModel, TrainConfig, TrainingCurve, fit_network, mlp_forward

log = logging.getLogger(__name__)

BUNDLE_SCHEMA = "satbeam.model/1"
N_BITS = 324
MEDOID_SPEC_CAP = 64


class ModelError(ValueError):
    """Model missing, untrained or incompatible with the request."""


@dataclass
class Approach1Model:
    mlp: MlpModel
    threshold: float = 0.5
    train_scores: MultilabelScores | None = None

    def check(self) -> None:
        if self.mlp.output != "sigmoid" or self.mlp.layer_dims[-1] != N_BITS or self.mlp.layer_dims[0] != 8:
            raise ModelError("approach-1 model must map 8 features to 324 sigmoid outputs")
        if self.mlp.scaler is None:
            raise ModelError("approach-1 model has no fitted feature scaler")


@dataclass
class Approach2Model:
    kmeans: KMeansModel
    classifier: MlpModel
    info: dict = field(default_factory=dict)

    def check(self) -> None:
        km = self.kmeans
        if km.codebook is None or len(km.codebook) != km.n_clusters:
            raise ModelError("approach-2 model has no representative matrix per cluster")
        clf = self.classifier
        if clf.output != "softmax" or clf.layer_dims[-1] != km.n_clusters or clf.layer_dims[0] != 8:
            raise ModelError("approach-2 classifier output does not match the cluster count")
        if clf.scaler is None:
            raise ModelError("approach-2 classifier has no fitted feature scaler")


def _scaled(scaler: FeatureScaler, x) -> np.ndarray:
    z = scaler.transform(x)
    if (z < -1e-9).any() or (z > 1 + 1e-9).any():
        log.warning("input features outside the training range; extrapolating")
    return z


def _split_xy(ds: Dataset, scaler: FeatureScaler, split: str):
    i = ds.indices(split)
    return scaler.transform(ds.features[i]), ds.bits[i].astype(float)


# ---------------------------------------------------------------------------
# approach 1

def train_mlp(ds: Dataset, cfg: TrainConfig, scaler: FeatureScaler | None = None):
    """Train the 8 -> hidden -> 324 multi-label network on the train split.

    Early stopping watches the validation split when it exists, else the
    test split.  Returns (Approach1Model, TrainingCurve).
    """
    if len(ds.indices("train")) == 0:
        raise ValueError("training split is empty; run split first")
    scaler = scaler or fit_scaler(ds)
    xt, yt = _split_xy(ds, scaler, "train")
    watch = "validation" if len(ds.indices("validation")) else "test"
    xv, yv = _split_xy(ds, scaler, watch)
    model = MlpModel.init([8, *cfg.hidden, N_BITS], seed=cfg.rng_seed, output="sigmoid", scaler=scaler)
    best, curve = fit_network(model, xt, yt, xv, yv, cfg)
    out = Approach1Model(best, cfg.threshold)
    pred = mlp_forward(best, xt) > cfg.threshold
    out.train_scores = multilabel_metrics(pred, yt)
    return out, curve


def approach1_predict_bits(model: Approach1Model, features) -> np.ndarray:
    """Thresholded quadrant bits for raw (unscaled) feature rows."""
    model.check()
    z = _scaled(model.mlp.scaler, np.atleast_2d(features))
    return (mlp_forward(model.mlp, z) > model.threshold).astype(np.uint8)


def approach1_infer(model: Approach1Model, spec: BeamSpec) -> WeightMatrix:
    q = approach1_predict_bits(model, spec.features())[0]
    if not q.any():
        # an all-off prediction is not a radiating array; keep the strongest port
        z = _scaled(model.mlp.scaler, spec.features()[None])
        q[int(np.argmax(mlp_forward(model.mlp, z)[0]))] = 1
    return WeightMatrix(expand_quadrant(q.reshape(18, 18)), spec.steer_az, spec.steer_el)


# ---------------------------------------------------------------------------
# approach 2

def cluster_representative(member_bits, member_specs, cfg: ArrayConfig, kw: CostWeights = CostWeights(),
                           seed: int = 0, spec_cap: int = MEDOID_SPEC_CAP) -> np.ndarray:
    """Cost medoid: the member bits with the lowest mean cost over the member specs.

    Clusters larger than ``spec_cap`` are scored against a seeded sample of
    ``spec_cap`` member specs.
    """
    bits = np.asarray(member_bits, np.uint8).reshape(-1, N_BITS)
    if len(bits) == 0:
        raise ValueError("cannot pick a representative for an empty cluster")
    if len(bits) == 1:
        return bits[0].copy()
    uniq, inverse = np.unique(bits, axis=0, return_inverse=True)
    if len(uniq) == 1:
        return uniq[0].copy()
    specs = list(member_specs)
    if len(specs) > spec_cap:
        pick = np.sort(np.random.default_rng(seed).choice(len(specs), spec_cap, replace=False))
        specs = [specs[i] for i in pick]
    full = expand_quadrant(uniq.reshape(-1, 18, 18))
    total = np.zeros(len(uniq))
    for s in specs:
        m = CutEvaluator(cfg, s.steer_az, s.steer_el)(full)
        c = np.asarray(cost(m, s, kw), float)
        c[~np.isfinite(c)] = 1e3
        total += c
    # ties resolve to the first occurrence in member order
    first = np.array([np.flatnonzero(inverse.ravel() == u)[0] for u in range(len(uniq))])
    order = np.lexsort((first, total))
    return uniq[order[0]].copy()


def majority_vote(member_bits) -> np.ndarray:
    b = np.asarray(member_bits, np.uint8).reshape(-1, N_BITS)
    return (b.mean(axis=0) >= 0.5).astype(np.uint8)


def train_cluster_classifier(ds: Dataset, km: KMeansModel, cfg: TrainConfig):
    """Softmax network mapping the 8 features to the k-means cluster index."""
    scaler = km.scaler or fit_scaler(ds)
    itr = ds.indices("train")
    xt = scaler.transform(ds.features[itr])
    yt = km.assign(xt)
    watch = "validation" if len(ds.indices("validation")) else "test"
    iv = ds.indices(watch)
    xv = scaler.transform(ds.features[iv])
    yv = km.assign(xv) if len(iv) else np.zeros(0, int)
    model = MlpModel.init([8, *cfg.hidden, km.n_clusters], seed=cfg.rng_seed, output="softmax", scaler=scaler)
    return fit_network(model, xt, yt, xv, yv, cfg)


def classifier_accuracy(clf: MlpModel, km: KMeansModel, ds: Dataset, split: str):
    """(accuracy, majority-class baseline) of cluster prediction on ``split``."""
    i = ds.indices(split)
    if not len(i):
        return float("nan"), float("nan")
    z = clf.scaler.transform(ds.features[i])
    truth = km.assign(z)
    pred = np.argmax(mlp_forward(clf, z), axis=1)
    base = np.bincount(km.assign(clf.scaler.transform(ds.features[ds.indices("train")])),
                       minlength=km.n_clusters)
    return float((pred == truth).mean()), float((truth == int(np.argmax(base))).mean())


def train_approach2(ds: Dataset, arr: ArrayConfig, cfg: TrainConfig, kw: CostWeights = CostWeights(),
                    n_clusters: int | None = None, k_sweep=range(4, 65)):
    """Cluster, build the representative codebook, and train the classifier.

    ``n_clusters=None`` picks k at the knee of the inertia curve over ``k_sweep``.
    """
    itr = ds.indices("train")
    if not len(itr):
        raise ValueError("training split is empty; run split first")
    scaler = fit_scaler(ds)
    xt = scaler.transform(ds.features[itr])
    info = {}
    if n_clusters is None:
        ks, inertias = elbow_sweep(xt, k_sweep, cfg.rng_seed)
        n_clusters = pick_knee(ks, inertias)
        info["k_sweep"] = ks
        info["inertia_curve"] = inertias
    km = kmeans_fit(xt, n_clusters, cfg.rng_seed)
    km.scaler = scaler
    labels = km.assign(xt)
    codebook = np.zeros((n_clusters, N_BITS), np.uint8)
    for j in range(n_clusters):
        members = itr[labels == j]
        specs = [BeamSpec.from_features(ds.features[i]) for i in members]
        codebook[j] = cluster_representative(ds.bits[members], specs, arr, kw, seed=cfg.rng_seed + j)
    km.codebook = codebook
    clf, curve = train_cluster_classifier(ds, km, cfg)
    acc, base = classifier_accuracy(clf, km, ds, "validation" if len(ds.indices("validation")) else "test")
    info.update(n_clusters=n_clusters, inertia=km.inertia, val_accuracy=acc, majority_baseline=base)
    return Approach2Model(km, clf, info), curve


def approach2_predict_clusters(model: Approach2Model, features) -> np.ndarray:
    model.check()
    z = _scaled(model.classifier.scaler, np.atleast_2d(features))
    return np.argmax(mlp_forward(model.classifier, z), axis=1)


def approach2_infer(model: Approach2Model, spec: BeamSpec) -> WeightMatrix:
    j = int(approach2_predict_clusters(model, spec.features())[0])
    q = model.kmeans.codebook[j]
    return WeightMatrix(expand_quadrant(q.reshape(18, 18)), spec.steer_az, spec.steer_el)


# ---------------------------------------------------------------------------
# persistence

def _bits_hex(q) -> str:
    return np.packbits(np.asarray(q, np.uint8), bitorder="little").tobytes().hex()


def _hex_bits(s: str) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes.fromhex(s), np.uint8), count=N_BITS, bitorder="little")


def model_to_dict(model) -> dict:
    if isinstance(model, Approach1Model):
        return {"schema": BUNDLE_SCHEMA, "approach": 1, "threshold": model.threshold, "mlp": model.mlp.to_dict()}
    if isinstance(model, Approach2Model):
        km = model.kmeans
        return {
            "schema": BUNDLE_SCHEMA,
            "approach": 2,
            "kmeans": {
                "n_clusters": km.n_clusters,
                "centroids": km.centroids.tolist(),
                "inertia": km.inertia,
                "codebook": [_bits_hex(q) for q in km.codebook],
                "scaler": km.scaler.to_dict() if km.scaler is not None else None,
            },
            "classifier": model.classifier.to_dict(),
            "info": model.info,
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d):
    if d.get("schema") != BUNDLE_SCHEMA:
        raise ModelError(f"model bundle schema {d.get('schema')!r} != {BUNDLE_SCHEMA!r}")
    if d["approach"] == 1:
        return Approach1Model(MlpModel.from_dict(d["mlp"]), d["threshold"])
    if d["approach"] == 2:
        k = d["kmeans"]
        sc = FeatureScaler.from_dict(k["scaler"]) if k.get("scaler") else None
        km = KMeansModel(k["n_clusters"], np.asarray(k["centroids"], float), k["inertia"],
                         np.array([_hex_bits(h) for h in k["codebook"]], np.uint8), sc)
        return Approach2Model(km, MlpModel.from_dict(d["classifier"]), d.get("info", {}))
    raise ModelError(f"unknown approach {d['approach']!r}")


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def infer(model, spec: BeamSpec) -> WeightMatrix:
    if isinstance(model, Approach1Model):
        return approach1_infer(model, spec)
    if isinstance(model, Approach2Model):
        return approach2_infer(model, spec)
    raise ModelError("untrained or unknown model")


__all__ = [
    "Approach1Model", "Approach2Model", "ModelError", "TrainConfig", "TrainingCurve",
    "train_mlp", "approach1_infer", "approach1_predict_bits", "cluster_representative", "majority_vote",
    "train_cluster_classifier", "train_approach2", "approach2_infer", "approach2_predict_clusters",
    "classifier_accuracy", "save_model", "load_model", "infer",
]
