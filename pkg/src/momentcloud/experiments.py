"""Desk-scale experiments behind the CLI.

Two small studies: how well plain ReLU nets of growing depth
approximate x^2 on [0, 1] (they struggle, which is why polynomial
inputs help), and the two-spiral toy problem where adding x^2, y^2, xy
to the input takes a tiny network from near-chance to near-perfect.
"""

from __future__ import annotations

import numpy as np

from . import nncore as nn
from .nncore import Tensor
from .rng import RandomStream, derive_seed

TOY_INIT_STD = 0.5
GRID_BOUND = 1.2
GRID_SIDE = 200


def _dense_params(widths, seed: int, std: float = TOY_INIT_STD) -> dict[str, Tensor]:
    """Fully connected net parameters: weights ~ N(0, std).

    Biases start at a small positive constant; narrow deep ReLU stacks
    die far too often with zero-mean random biases.
    """
    stream = RandomStream(derive_seed(seed, 1))
    params: dict[str, Tensor] = {}
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        params[f"w{i}"] = nn.parameter(
            stream.normal(fan_in * fan_out, std).reshape(fan_in, fan_out), f"w{i}")
        params[f"b{i}"] = nn.parameter(np.full(fan_out, 0.1), f"b{i}")
    return params


def _dense_forward(params: dict, x: Tensor, n_layers: int) -> Tensor:
    h = x
    for i in range(n_layers - 1):
        h = nn.relu(nn.matmul(h, params[f"w{i}"]) + params[f"b{i}"])
    return nn.matmul(h, params[f"w{n_layers - 1}"]) + params[f"b{n_layers - 1}"]


def approximate_square(depth: int, seed: int, *, n_samples: int = 1000,
                       hidden_width: int = 4, max_steps: int = 20000,
                       lr: float = 0.01, patience: int = 1000,
                       min_improvement: float = 1e-5) -> dict:
    """Train a ReLU net with `depth` hidden layers of 4 nodes to fit x^2.

    Fits 1000 equispaced samples of [0, 1] with full-batch Adam on the
    mean squared error, stopping early once the best max-abs error has
    not improved by min_improvement over `patience` steps. Returns the
    best max-abs (L-infinity) error seen and the steps run.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    xs = np.linspace(0.0, 1.0, n_samples).reshape(-1, 1)
    target = xs ** 2
    widths = [1] + [hidden_width] * depth + [1]
    params = _dense_params(widths, seed)
    state = nn.AdamState(lr=lr)
    x_in = Tensor(xs)
    best = float("inf")
    best_step = 0
    step = 0
    for step in range(1, max_steps + 1):
        pred = _dense_forward(params, x_in, len(widths) - 1)
        err = nn.sub(pred, target)
        loss = nn.reduce_mean(nn.mul(err, err))
        linf = float(np.max(np.abs(err.data)))
        if linf < best - min_improvement:
            best = linf
            best_step = step
        elif step - best_step >= patience:
            break
        nn.zero_grad(params)
        nn.backward(loss)
        nn.adam_step(params, None, state)
    return {"depth": depth, "seed": seed, "linf": best, "steps": step}


def square_depth_study(depths, runs: int, seed: int, **kwargs) -> list[dict]:
    """One approximate_square record per (depth, run)."""
    records = []
    for depth in depths:
        for run in range(runs):
            rec = approximate_square(depth, derive_seed(seed, depth, run), **kwargs)
            rec["run"] = run
            records.append(rec)
    return records


SPIRAL_TURNS = 2.5


def spiral_dataset(seed: int, n_per_class: int = 500, noise: float = 0.025,
                   turns: float = SPIRAL_TURNS) -> tuple[np.ndarray, np.ndarray]:
    """Two interleaved noisy spirals, n_per_class 2-D points each.

    Class c in {0, 1}: t ~ U[0.25, 2 pi turns], radius t / (2 pi turns),
    angle t + c pi, plus isotropic Gaussian noise. At 2.5 turns the raw
    coordinates defeat an 8-unit network while the quadratic lift does
    not; fewer turns make the problem too easy to show the gap.
    """
    xs, ys = [], []
    t_max = 2.0 * np.pi * turns
    for c in (0, 1):
        stream = RandomStream(derive_seed(seed, c))
        t = stream.uniform(n_per_class, 0.25, t_max)
        radius = t / t_max
        angle = t + c * np.pi
        pts = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        pts += stream.normal(2 * n_per_class, noise).reshape(n_per_class, 2)
        xs.append(pts)
        ys.append(np.full(n_per_class, c, dtype=np.int64))
    return np.concatenate(xs), np.concatenate(ys)


def spiral_features(points: np.ndarray, with_lift: bool) -> np.ndarray:
    """(x, y) or (x, y, x^2, y^2, xy)."""
    x, y = points[:, 0], points[:, 1]
    if not with_lift:
        return points.copy()
    return np.stack([x, y, x * x, y * y, x * y], axis=1)


def train_spiral(with_lift: bool, seed: int, *, hidden: int = 8,
                 steps: int = 6000, lr: float = 0.01,
                 n_per_class: int = 500, noise: float = 0.025) -> dict:
    """Train the one-hidden-layer sigmoid-output spiral classifier.

    Returns the train accuracy, final loss and the trained parameters;
    the input is either raw coordinates or their quadratic lift.
    """
    if hidden < 1:
        raise ValueError("hidden must be >= 1")
    points, labels = spiral_dataset(derive_seed(seed, 77), n_per_class, noise)
    feats = spiral_features(points, with_lift)
    params = _dense_params([feats.shape[1], hidden, 1], derive_seed(seed, 78))
    state = nn.AdamState(lr=lr)
    x_in = Tensor(feats)
    targets = labels.astype(np.float64)
    loss_value = float("nan")
    for _ in range(steps):
        logits = nn.reshape(_dense_forward(params, x_in, 2), (len(labels),))
        loss = nn.sigmoid_cross_entropy_mean(logits, targets)
        loss_value = float(loss.data)
        nn.zero_grad(params)
        nn.backward(loss)
        nn.adam_step(params, None, state)
    logits = nn.reshape(_dense_forward(params, x_in, 2), (len(labels),)).data
    accuracy = float(np.mean((logits > 0.0) == (labels == 1)))
    return {"with_lift": with_lift, "seed": seed, "hidden": hidden,
            "steps": steps, "accuracy": accuracy, "loss": loss_value,
            "params": params}


def decision_grid(params: dict, with_lift: bool, *, bound: float = GRID_BOUND,
                  side: int = GRID_SIDE) -> np.ndarray:
    """(side*side, 3) rows of x, y, predicted probability of class 1."""
    axis = np.linspace(-bound, bound, side)
    gx, gy = np.meshgrid(axis, axis)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    feats = spiral_features(pts, with_lift)
    logits = nn.reshape(_dense_forward(params, Tensor(feats), 2), (len(pts),))
    probs = nn.sigmoid(logits).data
    return np.concatenate([pts, probs.reshape(-1, 1)], axis=1)
