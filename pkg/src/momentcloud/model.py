"""Point-cloud classifier with polynomial feature lifting.

The architecture: an optional spatial-transform sub-network predicts a
3x3 matrix applied to the input; each transformed point is lifted with
fixed (or learned) polynomial features; with the kNN branch enabled the
lifted vector is tiled across the point's k neighbor slots and
concatenated with the neighbor coordinate differences before the first
shared MLP and a max over the slots; the remaining shared MLP widths,
a max pool over points, and a small fully connected head produce the
class logits. Forward evaluation is deterministic and invariant to the
order of the input points.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import nncore as nn
from .geometry import KnnGraph, as_cloud, augment, knn_graph, polynomial_lift, rotation_y
from .nncore import LayerSpec, Tensor, init_weights
from .rng import RandomStream, derive_seed

POLYNOMIAL_ORDERS = ("2", "3", "2+3", "learnable")
TNET_TRUNK = (64, 128, 1024)
TNET_HEAD = (512, 256)

# exponent patterns of the six quadratic monomials, used to seed the
# learnable-order lift so it starts at the fixed quadratic lift of |x|
QUADRATIC_EXPONENTS = np.array(
    [[2, 0, 0], [0, 2, 0], [0, 0, 2], [1, 1, 0], [1, 0, 1], [0, 1, 1]],
    dtype=np.float64).T


@dataclass(frozen=True)
class ModelConfig:
    num_points: int
    num_classes: int
    k: int = 20
    polynomial_order: str = "2"
    use_tnet: bool = True
    use_knn: bool = True
    use_lift: bool = True
    zero_lift: bool = False  # ablation: keep lift slots, zero the monomials
    trunk_widths: tuple = (64, 64, 64, 128, 1024)
    head_widths: tuple = (512, 256)
    dropout_prob: float = 0.4
    seed: int = 0

    def validate(self) -> None:
        if self.num_points < 1:
            raise ValueError("num_points must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not self.trunk_widths or not self.head_widths:
            raise ValueError("trunk_widths and head_widths must be non-empty")
        if any(w < 1 for w in tuple(self.trunk_widths) + tuple(self.head_widths)):
            raise ValueError("layer widths must be positive")
        if self.use_knn and not 1 <= self.k < self.num_points:
            raise ValueError("need 1 <= k < num_points")
        if self.polynomial_order not in POLYNOMIAL_ORDERS:
            raise ValueError(f"polynomial_order must be one of {POLYNOMIAL_ORDERS}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must be in [0, 1)")

    @property
    def lift_dim(self) -> int:
        if not self.use_lift:
            return 3
        return {"2": 9, "3": 13, "2+3": 19, "learnable": 9}[self.polynomial_order]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    lr: float = 0.01
    lr_decay: float = 0.7
    lr_decay_every: int = 20
    lr_floor: float = 1e-4
    eval_every: int = 0  # 0: evaluate only after the final epoch
    augment_y_rotation: bool = True
    augment_jitter_sigma: float = 0.01
    augment_dropout: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr <= 0.0:
            raise ValueError("lr must be > 0")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be >= 1")


@dataclass(frozen=True)
class Metrics:
    overall: float
    mean_class: float
    per_class: tuple  # accuracy per class; None where the split has no samples
    class_counts: tuple
    absent_classes: tuple
    mean_loss: float

    def as_record(self, epoch: int, split: str) -> dict:
        return {
            "epoch": epoch,
            "split": split,
            "overall": self.overall,
            "mean_class": self.mean_class,
            "per_class": list(self.per_class),
            "loss": self.mean_loss,
        }


def _layer_seed(seed: int, name: str) -> int:
    return derive_seed(seed, zlib.crc32(name.encode("utf-8")))


def init_parameters(cfg: ModelConfig) -> dict[str, Tensor]:
    """Fresh parameter dict for the configuration, deterministic per seed."""
    cfg.validate()
    params: dict[str, Tensor] = {}

    def linear(name: str, fan_in: int, fan_out: int, zero: bool = False) -> None:
        if zero:
            weight = nn.parameter(np.zeros((fan_in, fan_out)), f"{name}.w")
        else:
            weight = init_weights(LayerSpec("linear", fan_in, fan_out),
                                  _layer_seed(cfg.seed, name))
            weight.name = f"{name}.w"
        params[f"{name}.w"] = weight
        params[f"{name}.b"] = nn.parameter(np.zeros(fan_out), f"{name}.b")

    if cfg.use_tnet:
        widths = (3,) + TNET_TRUNK
        for i in range(len(TNET_TRUNK)):
            linear(f"tnet.conv{i}", widths[i], widths[i + 1])
        fc = (TNET_TRUNK[-1],) + TNET_HEAD
        for i in range(len(TNET_HEAD)):
            linear(f"tnet.fc{i}", fc[i], fc[i + 1])
        # zero-init output layer: the identity bias makes the transform
        # an exact identity at initialization
        linear("tnet.out", TNET_HEAD[-1], 9, zero=True)
    if cfg.use_lift and cfg.polynomial_order == "learnable":
        params["lift.exponents"] = nn.parameter(QUADRATIC_EXPONENTS.copy(), "lift.exponents")
    widths = (cfg.lift_dim + (3 if cfg.use_knn else 0),) + tuple(cfg.trunk_widths)
    for i in range(len(cfg.trunk_widths)):
        linear(f"trunk.{i}", widths[i], widths[i + 1])
    fc = (cfg.trunk_widths[-1],) + tuple(cfg.head_widths)
    for i in range(len(cfg.head_widths)):
        linear(f"head.{i}", fc[i], fc[i + 1])
    # zero-init classifier output: logits start uniform, which removes
    # the large random-logit loss spike at the start of training
    linear("head.out", cfg.head_widths[-1], cfg.num_classes, zero=True)
    return params


def lift_tensor(x: Tensor, order: str) -> Tensor:
    """Autodiff twin of geometry.polynomial_lift, same column order."""
    xs, ys, zs = (nn.narrow(x, 1, i, 1) for i in range(3))
    cols = [xs, ys, zs]
    if order in ("2", "2+3"):
        cols += [nn.mul(xs, xs), nn.mul(ys, ys), nn.mul(zs, zs),
                 nn.mul(xs, ys), nn.mul(xs, zs), nn.mul(ys, zs)]
    if order in ("3", "2+3"):
        xx, yy, zz = nn.mul(xs, xs), nn.mul(ys, ys), nn.mul(zs, zs)
        cols += [nn.mul(xx, xs), nn.mul(yy, ys), nn.mul(zz, zs),
                 nn.mul(xx, ys), nn.mul(xx, zs), nn.mul(yy, xs),
                 nn.mul(yy, zs), nn.mul(zz, xs), nn.mul(zz, ys),
                 nn.mul(nn.mul(xs, ys), zs)]
    return nn.concat(cols, axis=1)


def _lift_features(params: dict, cfg: ModelConfig, x: Tensor) -> Tensor:
    if not cfg.use_lift:
        return x
    if cfg.polynomial_order == "learnable":
        feats = nn.concat([x, nn.learnable_order_unit(x, params["lift.exponents"])], axis=1)
    else:
        feats = lift_tensor(x, cfg.polynomial_order)
    if cfg.zero_lift:
        mask = np.zeros(feats.data.shape[1])
        mask[:3] = 1.0
        feats = nn.mul(feats, mask)
    return feats


def _tnet_matrices(params: dict, flat: Tensor, n_clouds: int, n_points: int) -> Tensor:
    h = flat
    for i in range(len(TNET_TRUNK)):
        h = nn.relu(nn.matmul(h, params[f"tnet.conv{i}.w"]) + params[f"tnet.conv{i}.b"])
    pooled = nn.reduce_max(nn.reshape(h, (n_clouds, n_points, TNET_TRUNK[-1])), axis=1)
    g = pooled
    for i in range(len(TNET_HEAD)):
        g = nn.relu(nn.matmul(g, params[f"tnet.fc{i}.w"]) + params[f"tnet.fc{i}.b"])
    out = nn.matmul(g, params["tnet.out.w"]) + params["tnet.out.b"]
    return nn.reshape(out, (n_clouds, 3, 3)) + np.eye(3)


def tnet_forward(params: dict, cloud) -> Tensor:
    """Spatial-transform matrix for one cloud; exact identity at init."""
    cloud = as_cloud(cloud)
    mats = _tnet_matrices(params, Tensor(cloud), 1, cloud.shape[0])
    return nn.reshape(mats, (3, 3))


def second_order_features(cloud, knn: KnnGraph, order: str = "2") -> np.ndarray:
    """Pre-MLP feature block: per point, the lifted vector tiled across
    the k neighbor slots, concatenated with the edge differences.

    Shape (n, k, lift_dim + 3); order "2" gives n x k x 12.
    """
    cloud = as_cloud(cloud)
    n = cloud.shape[0]
    if knn.neighbors.shape[0] != n:
        raise ValueError("kNN graph does not match the cloud size")
    if order == "learnable":
        raise ValueError("learnable lift is parameterized; use the model forward")
    if order == "3":
        full = polynomial_lift(cloud, 3)
        lifted = np.concatenate([full[:, :3], full[:, 9:]], axis=1)
    else:
        lifted = polynomial_lift(cloud, 3 if order == "2+3" else 2)
    tiled = np.broadcast_to(lifted[:, None, :], (n, knn.k, lifted.shape[1]))
    return np.concatenate([tiled, knn.edge_features], axis=2)


def forward_logits(params: dict, clouds, cfg: ModelConfig, *, train: bool = False,
                   dropout_stream: RandomStream | None = None) -> Tensor:
    """Class logits for one (n, 3) cloud or a stacked (B, n, 3) batch.

    The network is agnostic to n as long as n > k when the kNN branch is
    enabled. With train=True, head dropout draws masks from
    dropout_stream.
    """
    batch = np.asarray(clouds, dtype=np.float64)
    single = batch.ndim == 2
    if single:
        batch = batch[None]
    if batch.ndim != 3 or batch.shape[2] != 3:
        raise ValueError(f"expected (B, n, 3) clouds, got {batch.shape}")
    n_clouds, n_points, _ = batch.shape
    if cfg.use_knn and n_points <= cfg.k:
        raise ValueError(f"need more than k={cfg.k} points, got {n_points}")
    if train and cfg.dropout_prob > 0.0 and dropout_stream is None:
        raise ValueError("training forward needs a dropout stream")

    flat = Tensor(batch.reshape(n_clouds * n_points, 3))
    if cfg.use_tnet:
        mats = _tnet_matrices(params, flat, n_clouds, n_points)
        flat = nn.reshape(nn.bmm(nn.reshape(flat, (n_clouds, n_points, 3)), mats),
                          (n_clouds * n_points, 3))

    feats = _lift_features(params, cfg, flat)
    if cfg.use_knn:
        # graph structure from the transformed coordinates; indices are
        # discrete, gradients flow through the gathered coordinates
        coords = flat.data.reshape(n_clouds, n_points, 3)
        idx = np.empty((n_clouds, n_points, cfg.k), dtype=np.int64)
        for b in range(n_clouds):
            idx[b] = knn_graph(coords[b], cfg.k).neighbors + b * n_points
        neighbors = nn.gather_rows(flat, idx.reshape(n_clouds * n_points, cfg.k))
        edges = nn.sub(neighbors, nn.reshape(flat, (n_clouds * n_points, 1, 3)))
        block = nn.concat([nn.expand_mid(feats, cfg.k), edges], axis=2)
        h = nn.relu(nn.matmul(block, params["trunk.0.w"]) + params["trunk.0.b"])
        h = nn.reduce_max(h, axis=1)
    else:
        h = nn.relu(nn.matmul(feats, params["trunk.0.w"]) + params["trunk.0.b"])
    for i in range(1, len(cfg.trunk_widths)):
        h = nn.relu(nn.matmul(h, params[f"trunk.{i}.w"]) + params[f"trunk.{i}.b"])

    pooled = nn.reduce_max(nn.reshape(h, (n_clouds, n_points, cfg.trunk_widths[-1])), axis=1)
    g = pooled
    for i in range(len(cfg.head_widths)):
        g = nn.relu(nn.matmul(g, params[f"head.{i}.w"]) + params[f"head.{i}.b"])
        if train and cfg.dropout_prob > 0.0:
            g = nn.dropout(g, cfg.dropout_prob, dropout_stream, train=True)
    logits = nn.matmul(g, params["head.out.w"]) + params["head.out.b"]
    return nn.reshape(logits, (cfg.num_classes,)) if single else logits


def _batch_runs(samples, batch_size: int):
    """Group consecutive samples with equal point counts into batches."""
    start = 0
    while start < len(samples):
        n = samples[start][0].shape[0]
        stop = start
        while stop < len(samples) and stop - start < batch_size \
                and samples[stop][0].shape[0] == n:
            stop += 1
        yield start, stop
        start = stop


def compute_metrics(labels, predictions, num_classes: int,
                    mean_loss: float = float("nan")) -> Metrics:
    """Metrics from parallel label/prediction arrays.

    Overall accuracy weights every sample equally; mean-class accuracy
    averages per-class accuracies over the classes present, and absent
    classes are reported separately.
    """
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape or labels.size == 0:
        raise ValueError("labels and predictions must be matching non-empty arrays")
    correct = np.zeros(num_classes, dtype=np.int64)
    counts = np.zeros(num_classes, dtype=np.int64)
    for label, pred in zip(labels, predictions):
        counts[label] += 1
        if label == pred:
            correct[label] += 1
    present = counts > 0
    per_class = tuple(float(correct[c]) / counts[c] if counts[c] else None
                      for c in range(num_classes))
    return Metrics(
        overall=float(correct.sum()) / float(counts.sum()),
        mean_class=float(np.mean([per_class[c] for c in range(num_classes) if present[c]])),
        per_class=per_class,
        class_counts=tuple(int(c) for c in counts),
        absent_classes=tuple(int(c) for c in np.flatnonzero(~present)),
        mean_loss=mean_loss,
    )


def evaluate(params: dict, cfg: ModelConfig, samples, batch_size: int = 32) -> Metrics:
    """Accuracy metrics of the model over (cloud, label) samples."""
    if not samples:
        raise ValueError("empty evaluation split")
    all_labels: list[int] = []
    all_preds: list[int] = []
    total_loss = 0.0
    for start, stop in _batch_runs(samples, batch_size):
        clouds = np.stack([samples[i][0] for i in range(start, stop)])
        labels = np.array([samples[i][1] for i in range(start, stop)], dtype=np.int64)
        logits = forward_logits(params, clouds, cfg)
        data = logits.data
        shifted = data - data.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        total_loss += float(-logp[np.arange(len(labels)), labels].sum())
        all_labels.extend(int(v) for v in labels)
        all_preds.extend(int(v) for v in np.argmax(data, axis=1))
    return compute_metrics(all_labels, all_preds, cfg.num_classes,
                           total_loss / len(all_labels))


@dataclass
class TrainResult:
    params: dict
    history: list  # eval records: epoch, split, overall, mean_class, per_class
    curves: list   # (epoch, mean train loss, train accuracy)
    steps: int
    final_train_loss: float


def train_classifier(cfg: ModelConfig, tcfg: TrainConfig, train_set, test_set=None,
                     params: dict | None = None) -> TrainResult:
    """Adam training over shuffled augmented mini-batches.

    Deterministic per (cfg.seed, tcfg.seed): shuffles, augmentation and
    dropout all draw from streams derived from the training seed. The
    learning rate decays by tcfg.lr_decay every lr_decay_every epochs
    down to lr_floor.
    """
    cfg.validate()
    tcfg.validate()
    if not train_set:
        raise ValueError("empty training split")
    if params is None:
        params = init_parameters(cfg)
    state = nn.AdamState(lr=tcfg.lr)
    history: list[dict] = []
    curves: list[tuple] = []
    steps = 0
    last_loss = float("nan")
    for epoch in range(tcfg.epochs):
        state.lr = max(tcfg.lr * tcfg.lr_decay ** (epoch // tcfg.lr_decay_every),
                       tcfg.lr_floor)
        order = RandomStream(derive_seed(tcfg.seed, 101, epoch)).permutation(len(train_set))
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, len(train_set), tcfg.batch_size):
            chosen = order[start:start + tcfg.batch_size]
            clouds, labels = [], []
            for i in chosen:
                cloud, label = train_set[int(i)]
                clouds.append(augment(cloud, derive_seed(tcfg.seed, 202, epoch, int(i)),
                                      y_rotation=tcfg.augment_y_rotation,
                                      jitter_sigma=tcfg.augment_jitter_sigma,
                                      dropout_ratio=tcfg.augment_dropout))
                labels.append(label)
            batch = np.stack(clouds)
            labels = np.array(labels, dtype=np.int64)
            drop_stream = RandomStream(derive_seed(tcfg.seed, 303, epoch, start))
            logits = forward_logits(params, batch, cfg, train=True,
                                    dropout_stream=drop_stream)
            loss = nn.softmax_cross_entropy_mean(logits, labels)
            nn.zero_grad(params)
            nn.backward(loss)
            nn.adam_step(params, None, state)
            steps += 1
            last_loss = float(loss.data)
            epoch_loss += last_loss * len(labels)
            epoch_correct += int((np.argmax(logits.data, axis=1) == labels).sum())
        curves.append((epoch, epoch_loss / len(train_set),
                       epoch_correct / len(train_set)))
        if test_set and tcfg.eval_every and (epoch + 1) % tcfg.eval_every == 0 \
                and epoch != tcfg.epochs - 1:
            history.append(evaluate(params, cfg, test_set).as_record(epoch, "test"))
    if test_set:
        history.append(evaluate(params, cfg, test_set).as_record(tcfg.epochs - 1, "test"))
    return TrainResult(params, history, curves, steps, last_loss)


def robustness_sweep(params: dict, cfg: ModelConfig, test_set, *,
                     dropout_ratios=None, y_angles_deg=None, seed: int = 0) -> list[dict]:
    """Accuracy over perturbed copies of the test split.

    Dropout values remove points via seeded augmentation; y angles apply
    exact rotations. Returns one record per sweep value; no monotonicity
    is asserted, the curve is simply recorded.
    """
    results = []
    for ratio in dropout_ratios or ():
        perturbed = [(augment(cloud, derive_seed(seed, 11, i), dropout_ratio=float(ratio)), label)
                     for i, (cloud, label) in enumerate(test_set)]
        metrics = evaluate(params, cfg, perturbed)
        results.append({"sweep": "dropout", "value": float(ratio),
                        "overall": metrics.overall, "mean_class": metrics.mean_class})
    for angle in y_angles_deg or ():
        rot = rotation_y(np.deg2rad(float(angle)))
        perturbed = [(cloud @ rot.T, label) for cloud, label in test_set]
        metrics = evaluate(params, cfg, perturbed)
        results.append({"sweep": "y_angle_deg", "value": float(angle),
                        "overall": metrics.overall, "mean_class": metrics.mean_class})
    return results
