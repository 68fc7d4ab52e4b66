"""End-to-end trainable classifier over geometric skeleton features.

Pipeline: pre-shape sequences -> optional learnable transform layer (or a
fixed projection) -> optional tangent scaling layer -> per-frame feature
flattening -> Conv1D stack -> MaxPool1D -> LSTM -> two fully connected
layers -> softmax cross-entropy. One autodiff tape is built per minibatch,
so the geometric layers and the head are optimized jointly.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import AdamState, Tape, adam_step
from .config import ModelConfig
from .data import MotionDataset
from .layers import DmlVariant, GtlVariant
from .shapespace import _log_many, _pole_ladder

__all__ = [
    "SkeletonClassifier",
    "EvalResult",
    "build_model",
    "train",
    "evaluate",
    "compute_features",
    "save_model",
    "load_model",
    "MODEL_MAGIC",
]

MODEL_MAGIC = b"E2EGNET1"


def compute_features(preshapes: np.ndarray, projection: str, ref_index: int,
                     rungs: int = 20) -> np.ndarray:
    """Fixed (non-learnable) geometric frontends.

    ``none`` passes pre-shape coordinates through; ``logmap`` projects every
    frame to the tangent space of the reference frame; ``pt`` log-maps each
    frame at its predecessor and parallel-transports the result to the
    reference with the pole ladder (the reference frame itself carries the
    zero vector).
    """
    if projection == "none":
        return preshapes
    if projection == "logmap":
        ref = preshapes[:, ref_index]
        return _log_many(ref[:, None], preshapes)
    if projection == "pt":
        n, f = preshapes.shape[:2]
        feats = np.zeros_like(preshapes)
        if f > 1:
            steps = _log_many(preshapes[:, :-1], preshapes[:, 1:])
            ref = preshapes[:, ref_index][:, None]
            feats[:, 1:] = _pole_ladder(preshapes[:, :-1], steps,
                                        np.broadcast_to(ref, steps.shape), rungs)
        return feats
    raise ValueError(f"unknown projection {projection!r}")


@dataclass
class EvalResult:
    accuracy: float
    per_class_accuracy: np.ndarray
    per_class_counts: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray
    probs_softmax: np.ndarray
    probs_sigmoid: np.ndarray


class SkeletonClassifier:
    """Holds the parameter tensors and runs tape-based forward passes."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: dict[str, np.ndarray] = {}
        self.history: list[dict] = []
        self._allocate(np.random.default_rng(config.seed))

    # -- construction -------------------------------------------------------

    def _allocate(self, rng):
        cfg = self.config
        rows = cfg.feature_rows
        if cfg.gtl_variant is not None:
            self.params["gtl.values"] = layers.init_gtl_params(
                cfg.gtl_variant, cfg.seq_len, rows, rng)
        if cfg.dml_variant is not None:
            self.params["dml.raw"] = layers.init_dml_params(
                cfg.dml_variant, cfg.seq_len, rows, rng)

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        in_ch = 3 * rows
        self.params["conv1.weight"] = uniform(
            (cfg.conv_channels, in_ch, cfg.conv_kernel), in_ch * cfg.conv_kernel)
        self.params["conv1.bias"] = uniform((cfg.conv_channels,),
                                            in_ch * cfg.conv_kernel)
        lstm_in = cfg.conv_channels
        if cfg.conv_layers == 2:
            c2 = cfg.conv_channels * 2
            fan = cfg.conv_channels * cfg.conv_kernel
            self.params["conv2.weight"] = uniform((c2, cfg.conv_channels,
                                                   cfg.conv_kernel), fan)
            self.params["conv2.bias"] = uniform((c2,), fan)
            lstm_in = c2
        h = cfg.lstm_units
        self.params["lstm.w_input"] = uniform((lstm_in, 4 * h), lstm_in)
        self.params["lstm.w_hidden"] = uniform((h, 4 * h), h)
        bias = uniform((4 * h,), h)
        bias[h:2 * h] = 1.0  # forget gate opens at init
        self.params["lstm.bias"] = bias
        self.params["fc1.weight"] = uniform((h, cfg.fc_hidden), h)
        self.params["fc1.bias"] = uniform((cfg.fc_hidden,), h)
        self.params["fc2.weight"] = uniform((cfg.fc_hidden, cfg.n_classes),
                                            cfg.fc_hidden)
        self.params["fc2.bias"] = uniform((cfg.n_classes,), cfg.fc_hidden)

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    # -- forward ------------------------------------------------------------

    def features(self, dataset: MotionDataset) -> np.ndarray:
        cfg = self.config
        if dataset.preshapes.shape[1] != cfg.seq_len:
            raise ValueError(f"dataset has {dataset.preshapes.shape[1]} frames, "
                             f"model expects {cfg.seq_len}")
        if dataset.preshapes.shape[2] != cfg.feature_rows:
            raise ValueError(f"dataset has {dataset.preshapes.shape[2] + 1} joints, "
                             f"model expects {cfg.n_joints}")
        mode = cfg.resolved_projection
        if mode == "gtl":
            return dataset.preshapes
        return compute_features(dataset.preshapes, mode, cfg.ref_index,
                                cfg.transport_rungs)

    def forward(self, tape: Tape, feats: np.ndarray, labels=None,
                requires_grad: bool = True):
        """One batched pass; returns (logits, loss, leaves)."""
        cfg = self.config
        leaves = {name: tape.variable(value, requires_grad=requires_grad, name=name)
                  for name, value in self.params.items()}
        x = tape.constant(feats, name="features")
        if cfg.resolved_projection == "gtl":
            x = layers.gtl_apply(x, leaves["gtl.values"], cfg.gtl_variant,
                                 cfg.ref_index)
        if cfg.dml_variant is not None:
            x = layers.dml_apply(x, leaves["dml.raw"], cfg.dml_variant)

        batch, frames = x.shape[0], x.shape[1]
        x = ad.reshape(x, (batch, frames, 3 * cfg.feature_rows))
        x = ad.relu(ad.conv1d(x, leaves["conv1.weight"], leaves["conv1.bias"]))
        if cfg.conv_layers == 2:
            x = ad.relu(ad.conv1d(x, leaves["conv2.weight"], leaves["conv2.bias"]))
        x = ad.maxpool1d(x, kernel=2, stride=2)

        h = tape.constant(np.zeros((batch, cfg.lstm_units)))
        c = tape.constant(np.zeros((batch, cfg.lstm_units)))
        for step in range(x.shape[1]):
            hc = ad.lstm_step(x[:, step, :], h, c, leaves["lstm.w_input"],
                              leaves["lstm.w_hidden"], leaves["lstm.bias"])
            h, c = hc[:, :cfg.lstm_units], hc[:, cfg.lstm_units:]

        hidden = ad.relu(ad.linear(h, leaves["fc1.weight"], leaves["fc1.bias"]))
        logits = ad.linear(hidden, leaves["fc2.weight"], leaves["fc2.bias"])
        loss = None
        if labels is not None:
            loss = ad.softmax_cross_entropy(logits, labels)
        return logits, loss, leaves

    def predict_logits(self, dataset: MotionDataset) -> np.ndarray:
        feats = self.features(dataset)
        out = []
        bs = self.config.batch_size
        for start in range(0, len(dataset), bs):
            logits, _, _ = self.forward(Tape(), feats[start:start + bs],
                                        requires_grad=False)
            out.append(logits.value)
        return np.concatenate(out, axis=0)


def build_model(config: ModelConfig) -> SkeletonClassifier:
    return SkeletonClassifier(config)


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------

def train(model: SkeletonClassifier, train_data: MotionDataset,
          val_data: MotionDataset | None = None) -> SkeletonClassifier:
    """Minibatch Adam for ``config.epochs`` epochs, deterministic in the seed.

    When a validation split is given, the best-by-validation parameter
    snapshot is restored at the end; otherwise the final parameters stand.
    """
    cfg = model.config
    if len(train_data) == 0:
        raise ValueError("empty training dataset")
    if train_data.labels.min() < 0 or train_data.labels.max() >= cfg.n_classes:
        raise ValueError("training labels outside [0, n_classes)")
    feats = model.features(train_data)
    labels = train_data.labels
    state = AdamState.for_params(model.params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    best_val, best_params = -1.0, None

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_data))
        losses, hits, seen = [], 0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            tape = Tape()
            logits, loss, leaves = model.forward(tape, feats[idx], labels[idx])
            if not np.isfinite(loss.value):
                raise RuntimeError(f"non-finite loss at epoch {epoch} "
                                   f"batch {start // cfg.batch_size}")
            tape.backward(loss)
            grads = {name: leaf.grad for name, leaf in leaves.items()}
            adam_step(state, model.params, grads)
            losses.append(float(loss.value))
            hits += int((logits.value.argmax(axis=1) == labels[idx]).sum())
            seen += len(idx)
        row = {"epoch": epoch, "loss": float(np.mean(losses)),
               "train_acc": hits / seen, "val_acc": None}
        if val_data is not None:
            row["val_acc"] = evaluate(model, val_data).accuracy
            if row["val_acc"] > best_val:
                best_val = row["val_acc"]
                best_params = copy.deepcopy(model.params)
        model.history.append(row)
    if best_params is not None:
        model.params = best_params
    return model


def evaluate(model: SkeletonClassifier, dataset: MotionDataset) -> EvalResult:
    """Accuracy, per-class accuracy and per-sample probability readouts.

    Both softmax and sigmoid readouts of the final-layer scores are
    returned so downstream consistency metrics can use either column.
    """
    logits = model.predict_logits(dataset)
    labels = dataset.labels
    predictions = logits.argmax(axis=1)
    accuracy = float((predictions == labels).mean())
    k = model.config.n_classes
    per_class = np.zeros(k)
    counts = np.zeros(k, dtype=np.int64)
    for c in range(k):
        mask = labels == c
        counts[c] = int(mask.sum())
        per_class[c] = float((predictions[mask] == c).mean()) if counts[c] else 0.0
    shifted = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    probs_softmax = ez / ez.sum(axis=1, keepdims=True)
    probs_sigmoid = 1.0 / (1.0 + np.exp(-logits))
    return EvalResult(accuracy=accuracy, per_class_accuracy=per_class,
                      per_class_counts=counts, predictions=predictions,
                      labels=labels, probs_softmax=probs_softmax,
                      probs_sigmoid=probs_sigmoid)


# ---------------------------------------------------------------------------
# Serialization: text manifest + little-endian float64 blob
# ---------------------------------------------------------------------------

def _encode_config(cfg: ModelConfig) -> list[str]:
    lines = []
    for name in ModelConfig.field_names():
        value = getattr(cfg, name)
        if isinstance(value, (GtlVariant, DmlVariant)):
            value = value.value
        lines.append(f"config.{name}={json.dumps(value)}")
    return lines


def _decode_config(pairs: dict[str, str]) -> ModelConfig:
    kwargs = {}
    for name in ModelConfig.field_names():
        raw = pairs.get(f"config.{name}")
        if raw is None:
            raise ValueError(f"model file missing config field {name!r}")
        value = json.loads(raw)
        if name == "gtl_variant" and value is not None:
            value = GtlVariant(value)
        if name == "dml_variant" and value is not None:
            value = DmlVariant(value)
        kwargs[name] = value
    return ModelConfig(**kwargs)


def save_model(model: SkeletonClassifier, path) -> None:
    """Write magic, a key/value text header and the parameter blob.

    Tensors are appended to the blob in declaration order as little-endian
    float64; the header indexes them as name;shape;byte-offset triples.
    """
    lines = _encode_config(model.config)
    offset = 0
    blobs = []
    for name, value in model.params.items():
        shape = "x".join(str(s) for s in value.shape) or "scalar"
        lines.append(f"tensor.{name}={shape};{offset}")
        raw = np.ascontiguousarray(value, dtype="<f8").tobytes()
        blobs.append(raw)
        offset += len(raw)
    header = "\n".join(lines).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + b"\n" + header + b"\n\n" + b"".join(blobs))


def load_model(path) -> SkeletonClassifier:
    with open(path, "rb") as fh:
        payload = fh.read()
    if not payload.startswith(MODEL_MAGIC + b"\n"):
        raise ValueError(f"{path}: bad magic, not a serialized model")
    rest = payload[len(MODEL_MAGIC) + 1:]
    split = rest.index(b"\n\n")
    header, blob = rest[:split].decode("utf-8"), rest[split + 2:]
    pairs = {}
    index = []
    for line in header.splitlines():
        key, _, value = line.partition("=")
        if key.startswith("tensor."):
            shape_str, offset = value.split(";")
            shape = () if shape_str == "scalar" else tuple(
                int(s) for s in shape_str.split("x"))
            index.append((key[len("tensor."):], shape, int(offset)))
        else:
            pairs[key] = value
    cfg = _decode_config(pairs)
    model = SkeletonClassifier(cfg)
    if [n for n, _, _ in index] != list(model.params):
        raise ValueError(f"{path}: tensor index does not match the "
                         "architecture derived from the config")
    for name, shape, offset in index:
        expected = model.params[name].shape
        if shape != expected:
            raise ValueError(f"{path}: tensor {name!r} has shape {shape}, "
                             f"config implies {expected}")
        count = int(np.prod(shape)) if shape else 1
        flat = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        model.params[name] = flat.reshape(shape).astype(np.float64)
    return model
