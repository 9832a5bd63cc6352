"""Acceptance criteria, one test per criterion.

Each test prints a PASS line with the measured numbers once its
assertions hold. The benchmark-training fixtures are shared between the
classification and robustness criteria, so the heavy work runs once.
"""

import time

import numpy as np
import pytest

import momentcloud.nncore as nn
from momentcloud import cli
from momentcloud.dataio import (build_benchmark, load_split, parse_off,
                                read_cloud_binary, serialize_off,
                                write_cloud_binary)
from momentcloud.experiments import square_depth_study, train_spiral
from momentcloud.geometry import (RigidTransform, apply_rigid, canonicalize,
                                  centroid, knn_graph, second_moment_matrix)
from momentcloud.model import (ModelConfig, TrainConfig, forward_logits,
                               init_parameters, robustness_sweep,
                               train_classifier)
from momentcloud.rng import RandomStream, derive_seed

from oracles import brute_force_knn, finite_difference_check, random_rotation

BENCH_SEED = 0
BENCH_TRAIN = TrainConfig(epochs=8, batch_size=16, lr_decay=0.7,
                          lr_decay_every=3, seed=BENCH_SEED)


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    manifest = build_benchmark(root, samples_per_class=100, num_points=256,
                               seed=BENCH_SEED)
    return (load_split(manifest, "train", root),
            load_split(manifest, "test", root), root, manifest)


@pytest.fixture(scope="module")
def trained_default(benchmark):
    train_set, test_set, _, _ = benchmark
    cfg = ModelConfig(num_points=256, num_classes=8, seed=BENCH_SEED)
    start = time.perf_counter()
    result = train_classifier(cfg, BENCH_TRAIN, train_set, test_set)
    elapsed = time.perf_counter() - start
    return result, cfg, elapsed


def test_criterion_1_moment_oracles():
    """Moment and kNN computations match brute-force oracles on 100 clouds."""
    start = time.perf_counter()
    for i in range(100):
        stream = RandomStream(derive_seed(777, i))
        n = 4 + int(stream.uniform(1, 0, 253)[0])
        cloud = stream.normal(3 * n, 2.0).reshape(n, 3)

        naive_centroid = np.zeros(3)
        naive_sigma = np.zeros((3, 3))
        for p in cloud:
            naive_centroid += p
            naive_sigma += np.outer(p, p)
        naive_centroid /= n
        assert np.max(np.abs(centroid(cloud) - naive_centroid)) < 1e-10
        assert np.max(np.abs(second_moment_matrix(cloud) - naive_sigma)) < 1e-10

        k = 1 + int(stream.uniform(1, 0, min(n - 1, 25))[0])
        assert np.array_equal(knn_graph(cloud, k).neighbors,
                              brute_force_knn(cloud, k))
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(f"\nPASS criterion 1: moment/kNN oracles on 100 clouds ({elapsed:.1f}s < 10s)")


def test_criterion_2_pca_invariance():
    """Canonical forms and eigenvalues are invariant to rigid motion."""
    start = time.perf_counter()
    for c in range(10):
        stream = RandomStream(derive_seed(888, c))
        cloud = stream.normal(3 * 80).reshape(80, 3) * np.array([3.0, 1.7, 0.8])
        base = canonicalize(cloud)
        assert not base.summary.is_degenerate
        scale = max(1.0, base.summary.eigenvalues[0])
        for t in range(20):
            tstream = RandomStream(derive_seed(999, c, t))
            transform = RigidTransform(random_rotation(tstream), tstream.normal(3, 2.0))
            moved = canonicalize(apply_rigid(cloud, transform))
            assert np.max(np.abs(moved.summary.eigenvalues
                                 - base.summary.eigenvalues)) < 1e-6 * scale
            for axis in range(3):
                direct = np.max(np.abs(moved.cloud[:, axis] - base.cloud[:, axis]))
                flipped = np.max(np.abs(moved.cloud[:, axis] + base.cloud[:, axis]))
                assert min(direct, flipped) < 1e-5
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(f"PASS criterion 2: PCA invariance over 10 clouds x 20 transforms "
          f"({elapsed:.1f}s < 10s)")


def test_criterion_3_gradient_suite():
    """Every autodiff op and the micro end-to-end model pass FD checks."""
    start = time.perf_counter()
    stream = RandomStream(31415)

    def p(shape, scale=1.0, shift=0.0):
        return nn.parameter(
            stream.normal(int(np.prod(shape)), scale).reshape(shape) + shift)

    idx = np.array([[0, 2], [3, 1], [2, 2]])
    targets = (RandomStream(1).uniform(6) > 0.5).astype(float)
    cases = [
        ("add/sub/mul", {"a": p((5, 4)), "b": p((4,))},
         lambda t: nn.reduce_sum(nn.mul(nn.add(t["a"], t["b"]),
                                        nn.sub(t["a"], t["b"])))),
        ("pow/abs", {"a": p((5, 4))},
         lambda t: nn.reduce_sum(nn.pow_const(nn.absolute(t["a"]) + 0.5, 3.0))),
        ("relu", {"a": p((5, 4), shift=0.2)},
         lambda t: nn.reduce_sum(nn.relu(t["a"]))),
        ("sigmoid", {"a": p((5, 4))},
         lambda t: nn.reduce_sum(nn.sigmoid(t["a"]))),
        ("exp/log", {"a": p((5, 4))},
         lambda t: nn.reduce_sum(nn.log(nn.exp(t["a"]) + 1.0))),
        ("matmul", {"a": p((5, 4)), "w": p((4, 3))},
         lambda t: nn.reduce_sum(nn.matmul(t["a"], t["w"]))),
        ("bmm", {"a": p((2, 3, 4)), "b": p((2, 4, 2))},
         lambda t: nn.reduce_sum(nn.bmm(t["a"], t["b"]))),
        ("reshape/narrow/concat/transpose", {"a": p((5, 4)), "b": p((4, 3))},
         lambda t: nn.reduce_sum(nn.concat(
             [nn.narrow(t["a"], 1, 0, 3),
              nn.transpose2d(nn.reshape(t["b"], (3, 4)))], axis=0))),
        ("gather/expand", {"a": p((5, 4))},
         lambda t: nn.reduce_sum(nn.mul(nn.expand_mid(
             nn.reshape(nn.gather_rows(t["a"], idx), (6, 4)), 2), 0.5))),
        ("reductions", {"a": p((5, 4))},
         lambda t: nn.add(
             nn.reduce_mean(nn.mul(t["a"], t["a"])),
             nn.add(nn.reduce_sum(nn.reduce_max(t["a"], axis=1)),
                    nn.reduce_sum(nn.maxpool_over_points(t["a"]))))),
        ("softmax_xent", {"v": p((6,))},
         lambda t: nn.softmax_cross_entropy(t["v"], 2)),
        ("softmax_xent_mean", {"m": p((3, 5))},
         lambda t: nn.softmax_cross_entropy_mean(t["m"], np.array([0, 3, 1]))),
        ("sigmoid_xent", {"u": p((6,))},
         lambda t: nn.sigmoid_cross_entropy_mean(t["u"], targets)),
        ("perceptron", {"w": p((4,))},
         lambda t: nn.perceptron_unit(np.arange(1.0, 5.0), t["w"])),
        ("square_unit", {"w1": p((4,)), "w2": p((4,))},
         lambda t: nn.square_unit(np.arange(1.0, 5.0), t["w1"], t["w2"])),
        ("high_order_2", {"w1": p((4,)), "w2": p((10,))},
         lambda t: nn.high_order_unit(np.arange(0.2, 1.0, 0.2), 2,
                                      t["w1"], t["w2"])),
        ("high_order_3", {"w1": p((3,)), "w2": p((6,)), "w3": p((10,))},
         lambda t: nn.high_order_unit(np.array([0.3, -0.4, 0.8]), 3,
                                      t["w1"], t["w2"], t["w3"])),
        ("learnable_order", {"x": p((3,), shift=2.0), "k": p((3, 3), 0.5)},
         lambda t: nn.reduce_sum(nn.learnable_order_unit(
             nn.absolute(t["x"]) + 0.3, t["k"]))),
    ]
    for name, params, build in cases:
        finite_difference_check(lambda: build(params), params, rtol=1e-4)

    micro = ModelConfig(num_points=8, num_classes=2, k=2, trunk_widths=(4, 8),
                        head_widths=(4,), dropout_prob=0.0, seed=5)
    params = init_parameters(micro)
    noise = RandomStream(9)
    for t in params.values():
        t.data = t.data + noise.normal(t.data.size, 0.05).reshape(t.data.shape)
    cloud = RandomStream(10).normal(24).reshape(8, 3)
    finite_difference_check(
        lambda: nn.softmax_cross_entropy(forward_logits(params, cloud, micro), 1),
        params, rtol=1e-3, atol=1e-6, max_entries=4, stream=RandomStream(11))
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    print(f"PASS criterion 3: gradient suite, {len(cases)} op groups + "
          f"end-to-end micro model ({elapsed:.1f}s < 60s)")


def test_criterion_4_two_spiral():
    """Quadratic input features take the 8-unit net from <=70% to >=95%."""
    start = time.perf_counter()
    lift_accs = [train_spiral(True, seed)["accuracy"] for seed in (0, 1, 2)]
    raw_accs = [train_spiral(False, seed)["accuracy"] for seed in (0, 1, 2)]
    elapsed = time.perf_counter() - start
    assert max(lift_accs) >= 0.95
    assert max(raw_accs) <= 0.70
    assert elapsed < 120.0
    print(f"PASS criterion 4: two-spiral lift best {max(lift_accs):.3f} >= 0.95, "
          f"no-lift best {max(raw_accs):.3f} <= 0.70 ({elapsed:.0f}s < 120s)")


def test_criterion_5_x2_approximation():
    """Depth-2 nets reach L-inf <= 0.02; depth 6 beats depth 1 in median."""
    start = time.perf_counter()
    depth2 = square_depth_study([2], runs=5, seed=42)
    ends = square_depth_study([1, 6], runs=3, seed=42)
    elapsed = time.perf_counter() - start
    best2 = min(r["linf"] for r in depth2)
    median1 = float(np.median([r["linf"] for r in ends if r["depth"] == 1]))
    median6 = float(np.median([r["linf"] for r in ends if r["depth"] == 6]))
    assert best2 <= 0.02
    assert median6 < median1
    assert elapsed < 300.0
    print(f"PASS criterion 5: x^2 depth-2 best L-inf {best2:.4f} <= 0.02, "
          f"median depth6 {median6:.4f} < depth1 {median1:.4f} ({elapsed:.0f}s < 300s)")


def test_criterion_6_permutation_invariance():
    """Logits are exactly identical under 50 point permutations per cloud."""
    start = time.perf_counter()
    cfg = ModelConfig(num_points=64, num_classes=8, seed=7)
    params = init_parameters(cfg)
    noise = RandomStream(8)
    for t in params.values():
        t.data = t.data + noise.normal(t.data.size, 0.05).reshape(t.data.shape)
    for c in range(2):
        cloud = RandomStream(derive_seed(123, c)).normal(3 * 64).reshape(64, 3)
        base = forward_logits(params, cloud, cfg).data
        for s in range(50):
            perm = RandomStream(derive_seed(321, c, s)).permutation(64)
            permuted = forward_logits(params, cloud[perm], cfg).data
            assert np.array_equal(permuted, base)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(f"PASS criterion 6: logits exactly permutation-invariant, "
          f"2 clouds x 50 permutations ({elapsed:.0f}s < 30s)")


def test_criterion_7_synthetic_benchmark(benchmark, trained_default):
    """Default model reaches 90% test accuracy; no-lift scores lower."""
    train_set, test_set, _, _ = benchmark
    result, cfg, elapsed = trained_default
    default_acc = result.history[-1]["overall"]
    assert elapsed < 900.0
    assert default_acc >= 0.90

    ablation_cfg = ModelConfig(num_points=256, num_classes=8, use_lift=False,
                               seed=BENCH_SEED)
    ablation = train_classifier(ablation_cfg, BENCH_TRAIN, train_set, test_set)
    ablation_acc = ablation.history[-1]["overall"]
    assert ablation_acc < default_acc
    print(f"PASS criterion 7: benchmark default {default_acc:.3f} >= 0.90 "
          f"in {elapsed:.0f}s < 900s; no-lift {ablation_acc:.3f} < default")


def test_criterion_8_robustness(benchmark, trained_default, tmp_path):
    """Dropout-0.5 accuracy within 5 points; full curves emitted as CSV."""
    train_set, test_set, root, _ = benchmark
    result, cfg, _ = trained_default
    ratios = [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875]
    angles = list(range(0, 360, 30))
    rows = robustness_sweep(result.params, cfg, test_set, dropout_ratios=ratios,
                            y_angles_deg=angles, seed=5)
    by_value = {r["value"]: r["overall"] for r in rows if r["sweep"] == "dropout"}
    assert abs(by_value[0.5] - by_value[0.0]) <= 0.05

    # the CLI emits the same curves as CSV artifacts
    from momentcloud.nncore import save_checkpoint
    import json as _json
    from dataclasses import fields as _fields
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    save_checkpoint(run_dir / "checkpoint.mmnt", result.params)
    (run_dir / "run_config.json").write_text(_json.dumps({
        "model": {f.name: getattr(cfg, f.name) for f in _fields(ModelConfig)},
        "train": {f.name: getattr(BENCH_TRAIN, f.name) for f in _fields(TrainConfig)},
    }))
    code = cli.main(["sweep", "--checkpoint", str(run_dir / "checkpoint.mmnt"),
                     "--manifest", str(root / "manifest.json"),
                     "--dropout", "0:0.875:0.125", "--yangle", "0:360:30",
                     "--seed", "5", "--out", str(tmp_path / "sweep")])
    assert code == 0
    dropout_csv = (tmp_path / "sweep" / "sweep_dropout.csv").read_text().strip().splitlines()
    yangle_csv = (tmp_path / "sweep" / "sweep_yangle.csv").read_text().strip().splitlines()
    assert [float(l.split(",")[0]) for l in dropout_csv[1:]] == ratios
    assert [float(l.split(",")[0]) for l in yangle_csv[1:]] == [float(a) for a in angles]
    print(f"PASS criterion 8: dropout 0.5 accuracy {by_value[0.5]:.3f} within "
          f"0.05 of baseline {by_value[0.0]:.3f}; curves emitted "
          f"({len(dropout_csv) - 1} + {len(yangle_csv) - 1} points)")


def test_criterion_9_round_trip_formats(tmp_path):
    """Binary formats round-trip bit-exactly; OFF conformance corpus parses."""
    start = time.perf_counter()
    stream = RandomStream(77)

    cloud32 = stream.normal(3 * 1024).reshape(1024, 3).astype(np.float32).astype(np.float64)
    cloud_path = tmp_path / "c.mpc1"
    write_cloud_binary(cloud_path, cloud32)
    assert np.array_equal(read_cloud_binary(cloud_path), cloud32)
    first_bytes = cloud_path.read_bytes()
    write_cloud_binary(cloud_path, read_cloud_binary(cloud_path))
    assert cloud_path.read_bytes() == first_bytes

    tensors = {"w": stream.normal(128).reshape(8, 16), "b": stream.normal(16)}
    ck = tmp_path / "p.mmnt"
    nn.save_checkpoint(ck, tensors)
    loaded = nn.load_checkpoint(ck)
    assert all(np.array_equal(loaded[k], tensors[k]) for k in tensors)
    nn.save_checkpoint(tmp_path / "p2.mmnt", loaded)
    assert ck.read_bytes() == (tmp_path / "p2.mmnt").read_bytes()

    tet = "OFF\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 1 3\n3 0 2 3\n3 1 2 3\n"
    mesh = parse_off(tet)
    assert mesh.vertices.shape == (4, 3) and mesh.faces.shape == (4, 3)
    again = parse_off(serialize_off(mesh))
    assert np.array_equal(again.faces, mesh.faces)
    quad = "OFF\n# comment\n4 1 4\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
    assert parse_off(quad).faces.tolist() == [[0, 1, 2], [0, 2, 3]]
    for malformed in ("PLY\n1 1 1\n", "OFF\n2 1 0\n0 0 0\n",
                      "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n",
                      tet + "junk\n"):
        with pytest.raises(ValueError):
            parse_off(malformed)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(f"PASS criterion 9: MPC1 + checkpoint bit-exact round trips, OFF "
          f"conformance corpus ({elapsed:.1f}s < 5s)")
