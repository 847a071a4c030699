"""Desk-scale models that generate value tables.

Two families: SyntheticModel evaluates a known sparse AND-OR ground truth
exactly (the oracle for recovery experiments), and TinyNet is a small
fully-connected rectifier classifier trained with plain SGD on synthetic
data, with masking, Gaussian parameter noise, gradient-sign input noise,
and label-noise support.  The scalar output analyzed for TinyNet is the
raw logit, which equals the log-odds of a sigmoid head exactly and never
overflows.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, OptimizationError
from .subset_lattice import reconstruct_all
from .value_table import ValueTable


@dataclass(frozen=True)
class SyntheticModel:
    """Exact sparse AND-OR function with known effects."""

    n: int
    bias: float
    planted_and: dict = field(default_factory=dict)
    planted_or: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 0:
            raise DataError(f"n must be nonnegative, got {self.n}")
        size = 1 << self.n
        planted_and = {int(k): float(v) for k, v in self.planted_and.items()}
        planted_or = {int(k): float(v) for k, v in self.planted_or.items()}
        for name, mapping in (("AND", planted_and), ("OR", planted_or)):
            for mask, effect in mapping.items():
                if not (0 <= mask < size):
                    raise DataError(f"{name} mask {mask} outside 0..{size - 1}")
                if not math.isfinite(effect):
                    raise DataError(f"{name} effect at mask {mask} is not finite")
        if 0 in planted_or:
            raise DataError("OR effects exclude the empty set")
        object.__setattr__(self, "planted_and", planted_and)
        object.__setattr__(self, "planted_or", planted_or)

    def planted_l1(self) -> float:
        return float(
            sum(abs(v) for k, v in self.planted_and.items() if k != 0)
            + sum(abs(v) for v in self.planted_or.values())
        )


def synthetic_eval(model: SyntheticModel, t: int) -> float:
    """bias + AND effects of subsets of t + OR effects of subsets meeting t."""
    total = model.bias
    for mask, effect in model.planted_and.items():
        if mask & t == mask:
            total += effect
    for mask, effect in model.planted_or.items():
        if mask & t:
            total += effect
    return float(total)


def synthetic_table(model: SyntheticModel, sample_id: str | None = None) -> ValueTable:
    """Evaluate the model on every mask via the closed-form transforms."""
    size = 1 << model.n
    i_and = np.zeros(size)
    i_or = np.zeros(size)
    for mask, effect in model.planted_and.items():
        i_and[mask] = effect
    for mask, effect in model.planted_or.items():
        i_or[mask] = effect
    bias = model.bias + i_and[0]
    i_and[0] = 0.0
    values = reconstruct_all(bias, i_and, i_or)
    return ValueTable(n=model.n, values=values, sample_id=sample_id)


def random_synthetic_model(
    n: int,
    seed: int,
    min_subsets: int = 3,
    max_subsets: int = 15,
    effect_range: tuple = (0.5, 3.0),
    signed: bool = True,
) -> SyntheticModel:
    """Sparse random ground truth with effects drawn from effect_range."""
    rng = np.random.default_rng(seed)
    size = 1 << n
    k = min(int(rng.integers(min_subsets, max_subsets + 1)), size - 1)
    masks = rng.choice(np.arange(1, size), size=k, replace=False)
    planted_and = {}
    planted_or = {}
    for mask in masks:
        effect = float(rng.uniform(*effect_range))
        if signed and rng.random() < 0.5:
            effect = -effect
        if rng.random() < 0.5:
            planted_and[int(mask)] = effect
        else:
            planted_or[int(mask)] = effect
    return SyntheticModel(
        n=n, bias=float(rng.normal()), planted_and=planted_and, planted_or=planted_or
    )


@dataclass(frozen=True)
class TinyNet:
    """Fully-connected rectifier network with a single linear logit output."""

    layer_sizes: tuple
    weights: tuple = field(repr=False)
    biases: tuple = field(repr=False)
    feature_baseline: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 3:
            raise DataError("need input, at least one hidden, and output layer")
        if sizes[-1] != 1:
            raise DataError(f"output layer must be a single logit, got {sizes[-1]}")
        if any(s < 1 for s in sizes):
            raise DataError("layer sizes must be positive")
        weights = []
        biases = []
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = np.asarray(self.weights[layer], dtype=np.float64).copy()
            b = np.asarray(self.biases[layer], dtype=np.float64).copy()
            if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                raise DataError(f"layer {layer} weight or bias shape mismatch")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DataError(f"layer {layer} parameters are not finite")
            w.flags.writeable = False
            b.flags.writeable = False
            weights.append(w)
            biases.append(b)
        baseline = np.asarray(self.feature_baseline, dtype=np.float64).copy()
        if baseline.shape != (sizes[0],) or not np.isfinite(baseline).all():
            raise DataError("feature_baseline must hold one finite value per feature")
        baseline.flags.writeable = False
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "biases", tuple(biases))
        object.__setattr__(self, "feature_baseline", baseline)

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def init_net(layer_sizes, seed: int) -> TinyNet:
    """Uniform fan-in-scaled init (bound sqrt(6/fan_in)), zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return TinyNet(
        layer_sizes=sizes,
        weights=tuple(weights),
        biases=tuple(biases),
        feature_baseline=np.zeros(sizes[0]),
        seed=seed,
    )


def with_baseline(net: TinyNet, baseline) -> TinyNet:
    return replace(net, feature_baseline=np.asarray(baseline, dtype=np.float64))


def _forward_acts(net: TinyNet, x: np.ndarray):
    acts = [x]
    pres = []
    a = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        pre = a @ w.T + b
        a = np.maximum(pre, 0.0)
        pres.append(pre)
        acts.append(a)
    logits = (a @ net.weights[-1].T + net.biases[-1])[:, 0]
    return acts, pres, logits


def forward(net: TinyNet, x) -> np.ndarray | float:
    """Logits for a feature vector or a batch of rows."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = np.atleast_2d(arr)
    if batch.shape[1] != net.layer_sizes[0]:
        raise DataError(
            f"expected {net.layer_sizes[0]} features, got {batch.shape[1]}"
        )
    _, _, logits = _forward_acts(net, batch)
    return float(logits[0]) if single else logits


def input_gradient(net: TinyNet, x) -> np.ndarray:
    """d logit / d input, computed by backpropagation, per sample."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = np.atleast_2d(arr)
    _, pres, _ = _forward_acts(net, batch)
    g = np.broadcast_to(net.weights[-1][0], (batch.shape[0], net.weights[-1].shape[1])).copy()
    for w, pre in zip(reversed(net.weights[:-1]), reversed(pres)):
        g = (g * (pre > 0)) @ w
    return g[0] if single else g


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(net: TinyNet, features, labels) -> float:
    """Mean logistic loss of the logits against 0/1 labels."""
    z = forward(net, np.atleast_2d(np.asarray(features, dtype=np.float64)))
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def _loss_gradients(net: TinyNet, x: np.ndarray, y: np.ndarray):
    acts, pres, logits = _forward_acts(net, x)
    dz = (_sigmoid(logits) - y) / x.shape[0]
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    g = dz[:, None]  # gradient at the output layer's pre-activation
    for layer in range(len(net.weights) - 1, -1, -1):
        grads_w[layer] = g.T @ acts[layer]
        grads_b[layer] = g.sum(axis=0)
        if layer > 0:
            g = (g @ net.weights[layer]) * (pres[layer - 1] > 0)
    return grads_w, grads_b


@dataclass(frozen=True)
class TrainConfig:
    """Plain-SGD settings; label noise resets a fixed random train subset."""

    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 0.1
    label_noise_ratio: float = 0.0
    seed: int = 0
    checkpoint_epochs: tuple | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise DataError("epochs must be >= 0 and batch_size >= 1")
        if not (self.learning_rate > 0):
            raise DataError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0.0 <= self.label_noise_ratio <= 0.5):
            raise DataError(
                f"label_noise_ratio must lie in [0, 0.5], got {self.label_noise_ratio}"
            )
        if self.checkpoint_epochs is not None:
            eps = tuple(int(e) for e in self.checkpoint_epochs)
            if any(e < 0 or e > self.epochs for e in eps):
                raise DataError("checkpoint epochs must lie in 0..epochs")
            if sorted(set(eps)) != list(eps):
                raise DataError("checkpoint epochs must be strictly increasing")
            object.__setattr__(self, "checkpoint_epochs", eps)


@dataclass(frozen=True)
class TrainSnapshot:
    epoch: int
    net: TinyNet
    train_loss: float
    test_loss: float


@dataclass(frozen=True)
class SyntheticDataset:
    """Feature matrix with 0/1 labels and a disjoint covering split."""

    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    train_idx: np.ndarray = field(repr=False)
    test_idx: np.ndarray = field(repr=False)

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        train_idx = np.array(self.train_idx, dtype=np.int64)
        test_idx = np.array(self.test_idx, dtype=np.int64)
        if features.ndim != 2 or not np.isfinite(features).all():
            raise DataError("features must be a finite 2-d matrix")
        if labels.shape != (features.shape[0],) or not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be one 0/1 value per row")
        merged = np.concatenate([train_idx, test_idx])
        if np.sort(merged).tolist() != list(range(features.shape[0])):
            raise DataError("train and test indices must partition the rows")
        for arr in (features, labels, train_idx, test_idx):
            arr.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "train_idx", train_idx)
        object.__setattr__(self, "test_idx", test_idx)


def apply_label_noise(labels: np.ndarray, train_idx, ratio: float, rng):
    """Reset floor(ratio * train size) train labels uniformly; may coincide.

    Returns the modified copy and the chosen row indices.
    """
    out = np.asarray(labels).copy()
    train_idx = np.asarray(train_idx)
    count = int(ratio * train_idx.size)
    if count == 0:
        return out, np.empty(0, dtype=np.int64)
    chosen = rng.choice(train_idx, size=count, replace=False)
    out[chosen] = rng.integers(0, 2, size=count)
    return out, chosen


def train(net: TinyNet, data: SyntheticDataset, cfg: TrainConfig):
    """SGD on the logistic loss; snapshots at the requested epochs."""
    if data.train_idx.size == 0:
        raise DataError("training split is empty")
    rng = np.random.default_rng(cfg.seed)
    labels, _ = apply_label_noise(
        data.labels.astype(np.float64), data.train_idx, cfg.label_noise_ratio, rng
    )
    baseline = data.features[data.train_idx].mean(axis=0)
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    wanted = cfg.checkpoint_epochs
    if wanted is None:
        wanted = (cfg.epochs,)
    want = set(wanted)

    train_x = data.features[data.train_idx]
    train_y = labels[data.train_idx]
    test_x = data.features[data.test_idx]
    test_y = data.labels[data.test_idx].astype(np.float64)

    def snapshot(epoch: int) -> TrainSnapshot:
        frozen = TinyNet(
            layer_sizes=net.layer_sizes,
            weights=tuple(w.copy() for w in weights),
            biases=tuple(b.copy() for b in biases),
            feature_baseline=baseline,
            seed=net.seed,
        )
        train_loss = logistic_loss(frozen, train_x, train_y)
        test_loss = (
            logistic_loss(frozen, test_x, test_y) if test_x.shape[0] else float("nan")
        )
        if not math.isfinite(train_loss):
            raise OptimizationError(
                f"training loss diverged at epoch {epoch}", iteration=epoch
            )
        return TrainSnapshot(
            epoch=epoch, net=frozen, train_loss=train_loss, test_loss=test_loss
        )

    snapshots = []
    if 0 in want:
        snapshots.append(snapshot(0))
    order = np.arange(data.train_idx.size)
    for epoch in range(1, cfg.epochs + 1):
        rng.shuffle(order)
        for start in range(0, order.size, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            live = TinyNet(
                layer_sizes=net.layer_sizes,
                weights=tuple(weights),
                biases=tuple(biases),
                feature_baseline=baseline,
                seed=net.seed,
            )
            grads_w, grads_b = _loss_gradients(live, train_x[rows], train_y[rows])
            for layer in range(len(weights)):
                weights[layer] = weights[layer] - cfg.learning_rate * grads_w[layer]
                biases[layer] = biases[layer] - cfg.learning_rate * grads_b[layer]
        if not all(np.isfinite(w).all() for w in weights):
            raise OptimizationError(
                f"parameters diverged at epoch {epoch}", iteration=epoch
            )
        if epoch in want:
            snapshots.append(snapshot(epoch))
    return snapshots


def _normalize_groups(groups, n_features: int):
    if isinstance(groups, dict):
        keys = sorted(groups)
        if keys != list(range(len(keys))):
            raise DataError("group keys must be the variables 0..n-1")
        ordered = [groups[k] for k in keys]
    else:
        ordered = list(groups)
    seen = np.zeros(n_features, dtype=bool)
    cleaned = []
    for var, feats in enumerate(ordered):
        idx = np.asarray(list(feats), dtype=np.int64)
        if idx.size == 0:
            raise DataError(f"variable {var} has no features")
        if idx.min() < 0 or idx.max() >= n_features:
            raise DataError(f"variable {var} references features outside the input")
        if seen[idx].any():
            raise DataError(f"variable {var} overlaps another variable's features")
        seen[idx] = True
        cleaned.append(idx)
    if not seen.all():
        raise DataError("groups must cover every feature")
    return cleaned


def even_groups(n_variables: int, features_per_variable: int):
    """Contiguous equal-size feature blocks, one per variable."""
    k = features_per_variable
    return tuple(tuple(range(v * k, (v + 1) * k)) for v in range(n_variables))


def masked_forward(net: TinyNet, x, t: int, groups) -> float:
    """Logit after replacing features of variables outside t by the baseline."""
    cleaned = _normalize_groups(groups, net.layer_sizes[0])
    arr = np.asarray(x, dtype=np.float64).copy()
    if arr.shape != (net.layer_sizes[0],):
        raise DataError("masked_forward expects a single feature vector")
    for var, feats in enumerate(cleaned):
        if not (t >> var) & 1:
            arr[feats] = net.feature_baseline[feats]
    return forward(net, arr)


def masked_table(
    net: TinyNet, x, groups, sample_id: str | None = None
) -> ValueTable:
    """Value table of masked logits over all 2^n variable subsets."""
    cleaned = _normalize_groups(groups, net.layer_sizes[0])
    n = len(cleaned)
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != (net.layer_sizes[0],):
        raise DataError("masked_table expects a single feature vector")
    size = 1 << n
    batch = np.tile(arr, (size, 1))
    masks = np.arange(size)
    for var, feats in enumerate(cleaned):
        off = (masks >> var) & 1 == 0
        batch[np.ix_(off, feats)] = net.feature_baseline[feats]
    return ValueTable(n=n, values=forward(net, batch), sample_id=sample_id)


def gaussian_perturb(net: TinyNet, sigma: float, seed: int) -> TinyNet:
    """Independent N(0, sigma^2) noise on every weight and bias."""
    if sigma < 0 or not math.isfinite(sigma):
        raise DataError(f"sigma must be nonnegative, got {sigma}")
    rng = np.random.default_rng(seed)
    weights = tuple(w + rng.normal(0.0, sigma, size=w.shape) for w in net.weights)
    biases = tuple(b + rng.normal(0.0, sigma, size=b.shape) for b in net.biases)
    return replace(net, weights=weights, biases=biases)


def fgsm_perturb(net: TinyNet, x, sigma: float) -> np.ndarray:
    """x + sigma * sign(d logit / dx); zero gradient leaves coordinates put."""
    if sigma < 0 or not math.isfinite(sigma):
        raise DataError(f"sigma must be nonnegative, got {sigma}")
    arr = np.asarray(x, dtype=np.float64)
    return arr + sigma * np.sign(input_gradient(net, arr))


def random_init_table(layer_sizes, n: int, seed: int) -> ValueTable:
    """Masked table of a freshly initialized net on one uniform random input."""
    sizes = tuple(int(s) for s in layer_sizes)
    if sizes[0] % n != 0:
        raise DataError(f"{sizes[0]} features do not split evenly into {n} variables")
    net = init_net(sizes, seed)
    x = np.random.default_rng([seed, 1]).uniform(-1.0, 1.0, size=sizes[0])
    groups = even_groups(n, sizes[0] // n)
    return masked_table(net, x, groups, sample_id=f"init-{seed}")


def variable_states(features_row: np.ndarray, groups) -> int:
    """Mask of variables whose mean feature value is positive."""
    mask = 0
    for var, feats in enumerate(groups):
        if float(np.mean(features_row[list(feats)])) > 0.0:
            mask |= 1 << var
    return mask


def generate_dataset(
    model: SyntheticModel,
    features_per_variable: int,
    samples: int,
    train_fraction: float = 0.5,
    flip_prob: float = 0.0,
    seed: int = 0,
) -> SyntheticDataset:
    """Uniform features labeled by the thresholded hidden model.

    Each variable owns features_per_variable contiguous features; a variable
    is active when its features average positive; the label is 1 when the
    hidden model's output on the active set is positive, then flipped with
    probability flip_prob.  Train rows come first in the returned matrix.
    """
    if samples < 2:
        raise DataError("need at least one train and one test sample")
    if not (0.0 <= flip_prob <= 0.5):
        raise DataError(f"flip_prob must lie in [0, 0.5], got {flip_prob}")
    if not (0.0 < train_fraction < 1.0):
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    n_features = model.n * features_per_variable
    groups = even_groups(model.n, features_per_variable)
    features = rng.uniform(-1.0, 1.0, size=(samples, n_features))
    labels = np.zeros(samples, dtype=np.int64)
    for row in range(samples):
        state = variable_states(features[row], groups)
        labels[row] = 1 if synthetic_eval(model, state) > 0.0 else 0
    flips = rng.random(samples) < flip_prob
    labels[flips] = 1 - labels[flips]
    n_train = max(1, min(samples - 1, int(round(samples * train_fraction))))
    return SyntheticDataset(
        features=features,
        labels=labels,
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, samples),
    )


def save_net(net: TinyNet, path) -> None:
    doc = {
        "layer_sizes": list(net.layer_sizes),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "feature_baseline": net.feature_baseline.tolist(),
        "seed": net.seed,
    }
    parent = os.path.dirname(os.path.abspath(os.fspath(path)))
    if not os.path.isdir(parent):
        raise DataError(f"parent directory does not exist: {parent}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_net(path) -> TinyNet:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed checkpoint JSON in {path}: {exc}") from exc
    try:
        return TinyNet(
            layer_sizes=tuple(doc["layer_sizes"]),
            weights=tuple(np.asarray(w, dtype=np.float64) for w in doc["weights"]),
            biases=tuple(np.asarray(b, dtype=np.float64) for b in doc["biases"]),
            feature_baseline=np.asarray(doc["feature_baseline"], dtype=np.float64),
            seed=int(doc["seed"]),
        )
    except KeyError as exc:
        raise DataError(f"checkpoint {path} missing key {exc}") from exc


def save_dataset(data: SyntheticDataset, path) -> None:
    """CSV with one feature column each and a final label column.

    Train rows are written first, so the split is recovered by row count.
    """
    n_features = data.features.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j}" for j in range(n_features)] + ["label"])
        for idx_block in (data.train_idx, data.test_idx):
            for row in idx_block:
                writer.writerow(
                    [repr(float(v)) for v in data.features[row]]
                    + [int(data.labels[row])]
                )


def load_dataset(path, train_count: int) -> SyntheticDataset:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read dataset: {exc}") from exc
    if not rows or not rows[0] or rows[0][-1] != "label":
        raise DataError(f"unrecognized dataset CSV header in {path}")
    body = rows[1:]
    if len(body) < 2:
        raise DataError(f"dataset {path} needs at least two rows")
    if not (1 <= train_count < len(body)):
        raise DataError(
            f"train_count {train_count} incompatible with {len(body)} rows"
        )
    try:
        features = np.array([[float(v) for v in r[:-1]] for r in body])
        labels = np.array([int(r[-1]) for r in body])
    except ValueError as exc:
        raise DataError(f"malformed dataset CSV {path}: {exc}") from exc
    return SyntheticDataset(
        features=features,
        labels=labels,
        train_idx=np.arange(train_count),
        test_idx=np.arange(train_count, len(body)),
    )
