"""Centerline probability model: a small feedforward scorer trained from scratch.

Each candidate centerline gets a scalar score from an MLP over the TV's
recent motion and a fixed number of points along the centerline, both
expressed in the TV-centered Cartesian frame; a softmax across a scene's
candidates turns scores into a prior over centerlines.

The network and its gradients are implemented directly in numpy so the
training step is fully reproducible from a seed; the estimator surface
(get_params / fit / predict_proba) follows the scikit-learn convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .centerlines import assign_gt_centerline, enumerate_sequences
from .geometry import to_cartesian_points
from .scene import HEADING, SPEED, X, Y, Scene, wrap_angle

MODEL_VERSION = 1

# Feature normalization; coordinates are tens of metres, speeds ~10 m/s.
POS_SCALE = 0.02
SPEED_SCALE = 0.1

HISTORY_STATES = 21
HISTORY_FEATURES = 4 * HISTORY_STATES   # (x, y, heading, speed) per state


@dataclass(frozen=True)
class ScorerSample:
    """Pre-encoded training sample: one scene with N candidates and a label."""

    history: np.ndarray       # (HISTORY_FEATURES,)
    centerlines: np.ndarray   # (N, 2 * n_points)
    gt_index: int


def encode_history(scene: Scene) -> np.ndarray:
    """TV history as a flat feature vector in the TV-centered frame."""
    tv = scene.tv
    cur = tv.current
    c, s = np.cos(-cur[HEADING]), np.sin(-cur[HEADING])
    rel = tv.states[:, X:Y + 1] - cur[X:Y + 1]
    x = c * rel[:, 0] - s * rel[:, 1]
    y = s * rel[:, 0] + c * rel[:, 1]
    h = wrap_angle(tv.states[:, HEADING] - cur[HEADING])
    feats = np.stack([x * POS_SCALE, y * POS_SCALE, h,
                      tv.states[:, SPEED] * SPEED_SCALE], axis=1)
    return feats.reshape(-1)


def encode_centerline(scene: Scene, seq, n_points: int, span: float = 110.0) -> np.ndarray:
    """Evenly spaced points over the sequence's first ``span`` metres ahead."""
    tv = scene.tv.current
    s = seq.start_s_tv + np.linspace(0.0, span, n_points)
    s = np.clip(s, 0.0, seq.polyline.length)
    pts = to_cartesian_points(seq.polyline, s, np.zeros(n_points))
    c, sn = np.cos(-tv[HEADING]), np.sin(-tv[HEADING])
    rel = pts - tv[X:Y + 1]
    x = c * rel[:, 0] - sn * rel[:, 1]
    y = sn * rel[:, 0] + c * rel[:, 1]
    return (np.stack([x, y], axis=1) * POS_SCALE).reshape(-1)


def encode_sample(scene: Scene, seqs, gt_index: int, n_points: int) -> ScorerSample:
    cls = np.stack([encode_centerline(scene, seq, n_points) for seq in seqs])
    return ScorerSample(encode_history(scene), cls, int(gt_index))


def build_training_set(scenes, n_points: int = 10) -> list:
    """Scenes -> labelled samples, with labels from the gt-centerline rule."""
    samples = []
    for scene in scenes:
        seqs = enumerate_sequences(scene)
        if len(seqs) < 2 or scene.gt_future is None:
            continue
        gt = assign_gt_centerline(scene, seqs)
        samples.append(encode_sample(scene, seqs, gt, n_points))
    return samples


def _glorot(rng, n_in: int, n_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_in, n_out))


class CenterlineScorer(BaseEstimator):
    """Shared-weight per-centerline MLP with a softmax across the scene.

    Architecture: one affine encoder per input branch (history, centerline),
    concatenated and passed through an affine-ReLU-affine-ReLU-affine trunk
    to a scalar score.  Training is mini-batch gradient descent with
    momentum on the cross-entropy of the softmax over candidates.
    """

    PARAM_NAMES = ("w_hist", "b_hist", "w_cl", "b_cl",
                   "w1", "b1", "w2", "b2", "w3", "b3")

    def __init__(self, embed_dim: int = 64, n_points: int = 10,
                 hidden: int = 512, lr: float = 1e-4, momentum: float = 0.9,
                 epochs: int = 10, batch_size: int = 128, seed: int = 0):
        self.embed_dim = embed_dim
        self.n_points = n_points
        self.hidden = hidden
        self.lr = lr
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    # -- parameters ------------------------------------------------------

    def init_weights(self) -> dict:
        rng = np.random.default_rng(self.seed)
        e, h = self.embed_dim, self.hidden
        cl_dim = 2 * self.n_points
        return {
            "w_hist": _glorot(rng, HISTORY_FEATURES, e),
            "b_hist": np.zeros(e),
            "w_cl": _glorot(rng, cl_dim, e),
            "b_cl": np.zeros(e),
            "w1": _glorot(rng, 2 * e, h),
            "b1": np.zeros(h),
            "w2": _glorot(rng, h, h),
            "b2": np.zeros(h),
            "w3": _glorot(rng, h, 1),
            "b3": np.zeros(1),
        }

    def _ensure_weights(self):
        if not hasattr(self, "weights_"):
            self.weights_ = self.init_weights()

    # -- forward / backward ---------------------------------------------

    def _forward(self, hist: np.ndarray, cls: np.ndarray):
        """Logits (N,) for one scene plus the cache needed for backprop."""
        w = self.weights_
        n = cls.shape[0]
        eh = hist @ w["w_hist"] + w["b_hist"]
        ec = cls @ w["w_cl"] + w["b_cl"]
        z0 = np.concatenate([np.tile(eh, (n, 1)), ec], axis=1)
        p1 = z0 @ w["w1"] + w["b1"]
        a1 = np.maximum(p1, 0.0)
        p2 = a1 @ w["w2"] + w["b2"]
        a2 = np.maximum(p2, 0.0)
        logits = (a2 @ w["w3"] + w["b3"]).reshape(-1)
        return logits, (hist, cls, z0, p1, a1, p2, a2)

    def _backward(self, dlogits: np.ndarray, cache, grads: dict):
        """Accumulate parameter gradients for one scene into ``grads``."""
        w = self.weights_
        hist, cls, z0, p1, a1, p2, a2 = cache
        e = self.embed_dim
        g = dlogits[:, None]                       # (N, 1)
        grads["w3"] += a2.T @ g
        grads["b3"] += g.sum(axis=0)
        da2 = g @ w["w3"].T
        dp2 = da2 * (p2 > 0)
        grads["w2"] += a1.T @ dp2
        grads["b2"] += dp2.sum(axis=0)
        da1 = dp2 @ w["w2"].T
        dp1 = da1 * (p1 > 0)
        grads["w1"] += z0.T @ dp1
        grads["b1"] += dp1.sum(axis=0)
        dz0 = dp1 @ w["w1"].T
        deh = dz0[:, :e].sum(axis=0)               # history branch is shared
        dec = dz0[:, e:]
        grads["w_hist"] += np.outer(hist, deh)
        grads["b_hist"] += deh
        grads["w_cl"] += cls.T @ dec
        grads["b_cl"] += dec.sum(axis=0)

    @staticmethod
    def _softmax(logits: np.ndarray) -> np.ndarray:
        z = np.exp(logits - logits.max())
        return z / z.sum()

    def loss_and_gradients(self, samples) -> tuple:
        """Mean cross-entropy over samples and its parameter gradients."""
        self._ensure_weights()
        grads = {k: np.zeros_like(v) for k, v in self.weights_.items()}
        total = 0.0
        for sample in samples:
            logits, cache = self._forward(sample.history, sample.centerlines)
            probs = self._softmax(logits)
            total += -np.log(max(probs[sample.gt_index], 1e-300))
            dlogits = probs.copy()
            dlogits[sample.gt_index] -= 1.0
            self._backward(dlogits / len(samples), cache, grads)
        return total / len(samples), grads

    # -- estimator surface ----------------------------------------------

    def fit(self, samples, callback=None):
        """Train on pre-encoded samples (see :func:`build_training_set`).

        Mini-batch first-order updates with adaptive per-parameter step
        sizes (Adam; ``momentum`` is the first-moment decay).
        """
        if not samples:
            raise ValueError("empty training set")
        self.weights_ = self.init_weights()
        m1 = {k: np.zeros_like(v) for k, v in self.weights_.items()}
        m2 = {k: np.zeros_like(v) for k, v in self.weights_.items()}
        b1, b2, eps = self.momentum, 0.999, 1e-8
        rng = np.random.default_rng(self.seed + 1)
        order = np.arange(len(samples))
        self.loss_history_ = []
        step = 0
        for epoch in range(self.epochs):
            rng.shuffle(order)
            epoch_loss = 0.0
            n_batches = 0
            for start in range(0, len(order), self.batch_size):
                batch = [samples[j] for j in order[start:start + self.batch_size]]
                loss, grads = self.loss_and_gradients(batch)
                step += 1
                for k in self.weights_:
                    m1[k] = b1 * m1[k] + (1.0 - b1) * grads[k]
                    m2[k] = b2 * m2[k] + (1.0 - b2) * grads[k] ** 2
                    mh = m1[k] / (1.0 - b1 ** step)
                    vh = m2[k] / (1.0 - b2 ** step)
                    self.weights_[k] = (self.weights_[k]
                                        - self.lr * mh / (np.sqrt(vh) + eps))
                epoch_loss += loss
                n_batches += 1
            self.loss_history_.append(epoch_loss / n_batches)
            if callback is not None:
                callback(epoch, self.loss_history_[-1])
        return self

    def predict_logits(self, sample_or_scene, seqs=None) -> np.ndarray:
        self._ensure_weights()
        if isinstance(sample_or_scene, Scene):
            sample = encode_sample(sample_or_scene, seqs, 0, self.n_points)
        else:
            sample = sample_or_scene
        logits, _ = self._forward(sample.history, sample.centerlines)
        return logits

    def predict_proba(self, sample_or_scene, seqs=None) -> np.ndarray:
        """Prior over a scene's candidate centerlines (sums to 1)."""
        return self._softmax(self.predict_logits(sample_or_scene, seqs))

    def score(self, samples) -> float:
        """Top-1 accuracy on pre-encoded samples."""
        hits = sum(int(np.argmax(self.predict_logits(s)) == s.gt_index)
                   for s in samples)
        return hits / len(samples)

    # -- persistence -----------------------------------------------------

    def save(self, path) -> None:
        self._ensure_weights()
        doc = {
            "version": MODEL_VERSION,
            "e": self.embed_dim,
            "p": self.n_points,
            "seed": self.seed,
            "tensors": {
                k: [list(v.shape), v.reshape(-1).tolist()]
                for k, v in self.weights_.items()
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path) -> "CenterlineScorer":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')!r}")
        model = cls(embed_dim=int(doc["e"]), n_points=int(doc["p"]),
                    seed=int(doc.get("seed", 0)))
        model.weights_ = {
            k: np.asarray(flat, dtype=float).reshape(shape)
            for k, (shape, flat) in doc["tensors"].items()
        }
        hidden = model.weights_["w1"].shape[1]
        model.hidden = int(hidden)
        return model
