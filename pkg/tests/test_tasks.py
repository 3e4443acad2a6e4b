"""Dataset loading, target families, and the sequential retraining protocol."""

import struct
from pathlib import Path

import numpy as np
import pytest

from plab import capacity, infer, nn, tasks


# ---------------------------------------------------------------- idx oracle

def naive_idx_images(blob):
    """Byte-by-byte IDX image parse, independent of the library reader."""
    def be32(i):
        return int.from_bytes(blob[i : i + 4], "big")

    assert be32(0) == 2051
    n, rows, cols = be32(4), be32(8), be32(12)
    out, pos = [], 16
    for _ in range(n):
        out.append([blob[pos + j] / 255.0 for j in range(rows * cols)])
        pos += rows * cols
    return np.array(out)


def idx_image_bytes(images):
    """images: list of flat uint8 pixel lists, all the same length."""
    n = len(images)
    side = int(np.sqrt(len(images[0])))
    head = struct.pack(">IIII", 2051, n, side, len(images[0]) // side)
    return head + bytes(b for img in images for b in img)


def idx_label_bytes(labels):
    return struct.pack(">II", 2049, len(labels)) + bytes(labels)


# ----------------------------------------------------------------- idx files

def test_idx_hand_case(tmp_path):
    img = tmp_path / "imgs"
    lbl = tmp_path / "lbls"
    img.write_bytes(idx_image_bytes([[0, 255, 128, 64]]))
    lbl.write_bytes(idx_label_bytes([7]))
    ds = tasks.load_idx(img, lbl)
    assert np.array_equal(ds.inputs, np.array([[0.0, 1.0, 128 / 255, 64 / 255]]))
    assert np.array_equal(ds.labels, np.array([7]))
    assert ds.source == "idx_file"


def test_idx_matches_naive_reader(tmp_path):
    rng = np.random.default_rng(0)
    images = [list(rng.integers(0, 256, size=9, dtype=np.uint8)) for _ in range(5)]
    blob = idx_image_bytes(images)
    path = tmp_path / "imgs"
    path.write_bytes(blob)
    ds = tasks.load_idx(path)
    assert ds.labels is None
    assert np.array_equal(ds.inputs, naive_idx_images(blob))


def test_idx_bad_magic_names_offset(tmp_path):
    path = tmp_path / "imgs"
    path.write_bytes(struct.pack(">IIII", 1234, 1, 1, 1) + b"\x00")
    with pytest.raises(tasks.IdxFormatError, match="offset 0"):
        tasks.load_idx(path)


def test_idx_truncated_pixels(tmp_path):
    path = tmp_path / "imgs"
    path.write_bytes(struct.pack(">IIII", 2051, 2, 2, 2) + b"\x00" * 5)
    with pytest.raises(tasks.IdxFormatError, match="truncated"):
        tasks.load_idx(path)


def test_idx_label_count_mismatch(tmp_path):
    img = tmp_path / "imgs"
    lbl = tmp_path / "lbls"
    img.write_bytes(idx_image_bytes([[0, 0, 0, 0]]))
    lbl.write_bytes(idx_label_bytes([1, 2]))
    with pytest.raises(tasks.IdxFormatError, match="labels"):
        tasks.load_idx(img, lbl)


def test_real_mnist_when_available():
    candidates = [
        Path("data/train-images-idx3-ubyte"),
        Path("data/mnist/train-images-idx3-ubyte"),
    ]
    found = [p for p in candidates if p.exists()]
    if not found:
        pytest.skip("no MNIST IDX files in data/")
    ds = tasks.load_idx(found[0])
    assert ds.dim == 784
    assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0


# ------------------------------------------------------------------ datasets

def test_dataset_validation():
    with pytest.raises(ValueError):
        tasks.Dataset(inputs=np.zeros(4))
    with pytest.raises(ValueError):
        tasks.Dataset(inputs=np.zeros((3, 2)), labels=np.array([1, 2]))
    with pytest.raises(ValueError):
        tasks.Dataset(inputs=np.zeros((2, 2)), labels=np.array([0, 12]))
    ds = tasks.Dataset(inputs=np.zeros((3, 2)), labels=np.array([0, 9, 4]))
    assert (ds.n, ds.dim) == (3, 2)


def test_synth_inputs_structure():
    ds = tasks.synth_inputs(seed=0, n=200, dim=6, num_clusters=4)
    assert ds.inputs.shape == (200, 6)
    assert np.array_equal(ds.labels, np.arange(200) % 4)
    assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0
    # Points in a cluster hug their center: per-cluster spread is the noise
    # scale, far below the typical distance between random centers.
    for j in range(4):
        cluster = ds.inputs[ds.labels == j]
        spread = np.linalg.norm(cluster - cluster.mean(axis=0), axis=1).mean()
        assert spread < 0.05 * np.sqrt(6) * 2.0


def test_synth_inputs_deterministic():
    a = tasks.synth_inputs(1, 50, 3, 5)
    b = tasks.synth_inputs(1, 50, 3, 5)
    c = tasks.synth_inputs(2, 50, 3, 5)
    assert np.array_equal(a.inputs, b.inputs)
    assert not np.array_equal(a.inputs, c.inputs)
    with pytest.raises(ValueError):
        tasks.synth_inputs(0, 0, 3, 5)


# ------------------------------------------------------------ target families

def test_random_net_target_is_scaled_generator_output():
    t = tasks.make_target("random_net", 3, 4)
    x = np.random.default_rng(9).uniform(0, 1, size=(8, 4))
    gen_spec = nn.MlpSpec((4, 30, 30, 1))
    gen_params = nn.init_params(gen_spec, 3)
    raw, _ = nn.forward(gen_params, gen_spec, x)
    assert np.array_equal(tasks.eval_target(t, x), 10.0 * raw)


def test_hash_target_is_sine_of_scaled_generator_output():
    t = tasks.make_target("hash", 5, 3)
    x = np.random.default_rng(10).uniform(0, 1, size=(16, 3))
    raw, _ = nn.forward(t.generator_params, t.generator_spec, x)
    values = tasks.eval_target(t, x)
    assert np.array_equal(values, np.sin(1000.0 * raw))
    assert np.max(np.abs(values)) <= 1.0


def test_threshold_targets_indicator_of_label():
    labels = np.array([3, 7, 0, 9])
    x = np.zeros((4, 2))
    t5 = tasks.make_target("threshold", 5, 2)
    assert np.array_equal(tasks.eval_target(t5, x, labels),
                          np.array([[1.0], [0.0], [1.0], [0.0]]))
    t0 = tasks.make_target("threshold", 0, 2)
    assert np.all(tasks.eval_target(t0, x, labels) == 0.0)
    t10 = tasks.make_target("threshold", 10, 2)
    assert np.all(tasks.eval_target(t10, x, labels) == 1.0)


def test_threshold_without_labels_rejected():
    t = tasks.make_target("threshold", 2, 2)
    with pytest.raises(tasks.MissingLabelsError):
        tasks.eval_target(t, np.zeros((3, 2)))


def test_target_validation():
    with pytest.raises(ValueError, match="kind"):
        tasks.make_target("fourier", 0, 2)
    t = tasks.make_target("random_net", 0, 2)
    with pytest.raises(ValueError, match="dim"):
        tasks.eval_target(t, np.zeros((3, 5)))


def test_sampler_adapter_matches_direct_evaluation():
    x = np.random.default_rng(2).uniform(0, 1, size=(6, 3))
    sample = tasks.target_sampler("random_net", 3)
    direct = tasks.eval_target(tasks.make_target("random_net", 11, 3), x)
    assert np.array_equal(sample(11)(x), direct)

    labels = np.array([0, 1, 2, 3, 4, 5])
    sample = tasks.target_sampler("threshold", 3, labels)
    assert np.array_equal(sample(3)(x),
                          (labels < 3).astype(np.float64)[:, None])


def test_default_budgets_per_family():
    assert tasks.default_steps("random_net") == 3000
    assert tasks.default_steps("hash") == 5000
    assert tasks.default_steps("threshold") == 3000


# ------------------------------------------------------------------ sequences

def _small_dataset(n=8, dim=2, seed=1):
    rng = np.random.default_rng(seed)
    return tasks.Dataset(inputs=rng.uniform(0, 1, size=(n, dim)),
                         labels=rng.integers(0, 10, size=n))


def test_run_sequence_replays_documented_protocol():
    # Replicate two iterations by hand: fresh target per iteration, params
    # carried over, optimizer state reset, seeded epoch shuffling.
    ds = _small_dataset()
    learner = nn.MlpSpec((2, 4, 1))
    steps, batch = 5, 4
    result = tasks.run_sequence(
        learner, learner_seed=3, task_kind="random_net", dataset=ds,
        num_iterations=2, steps_per_iter=steps, batch_size=batch,
        optimizer=nn.make_optimizer("sgd", 0.01), task_seed=2,
    )

    params = nn.init_params(learner, 3)
    for iteration in range(2):
        target_seed = (2 * 1_000_003 + iteration) % 2**63
        target = tasks.make_target("random_net", target_seed, 2)
        targets = tasks.eval_target(target, ds.inputs)
        state = nn.make_optimizer("sgd", 0.01)
        rng = np.random.default_rng(np.random.SeedSequence((3, 2, iteration)))
        order, cursor = rng.permutation(ds.n), 0
        for _ in range(steps):
            if cursor + batch > ds.n:
                order, cursor = rng.permutation(ds.n), 0
            idx = order[cursor : cursor + batch]
            cursor += batch
            _, grads = nn.loss_and_grad(params, learner, ds.inputs[idx], targets[idx])
            nn.optimizer_step(state, params, grads)
        outputs, features = nn.forward(params, learner, ds.inputs)
        record = result.records[iteration]
        assert record.final_mse == float(np.mean((outputs - targets) ** 2))
        report = capacity.rank_report(features)
        assert record.effective_dim == report.effective_dim
        assert record.srank == report.srank
        assert record.steps == steps
        assert record.iteration == iteration


def test_threshold_sequence_uses_iteration_index():
    ds = _small_dataset()
    learner = nn.MlpSpec((2, 3, 1))
    result = tasks.run_sequence(
        learner, learner_seed=0, task_kind="threshold", dataset=ds,
        num_iterations=2, steps_per_iter=0, batch_size=4,
    )
    params = nn.init_params(learner, 0)
    outputs, _ = nn.forward(params, learner, ds.inputs)
    for iteration in range(2):
        expected = (ds.labels < iteration).astype(np.float64)[:, None]
        assert result.records[iteration].final_mse == float(
            np.mean((outputs - expected) ** 2)
        )


def test_sequence_prefix_stability_and_task_seed():
    ds = _small_dataset()
    learner = nn.MlpSpec((2, 4, 1))
    kw = dict(task_kind="random_net", dataset=ds, steps_per_iter=4, batch_size=4)
    long = tasks.run_sequence(learner, 1, num_iterations=3, **kw)
    short = tasks.run_sequence(learner, 1, num_iterations=1, **kw)
    assert long.records[0] == short.records[0]
    other = tasks.run_sequence(learner, 1, num_iterations=1, task_seed=9, **kw)
    assert other.records[0].final_mse != short.records[0].final_mse


def test_sequence_with_aux_heads_keeps_main_error_definition():
    ds = _small_dataset(n=12)
    learner = nn.MlpSpec((2, 5, 1))
    cfg = infer.InferConfig(k=3, beta=10.0, alpha=0.05)
    result = tasks.run_sequence(
        learner, learner_seed=4, task_kind="random_net", dataset=ds,
        num_iterations=1, steps_per_iter=0, batch_size=4, infer_cfg=cfg,
    )
    # With zero steps the main-head error equals the plain network's initial
    # error: attaching auxiliary output columns must not disturb it.
    plain = tasks.run_sequence(
        learner, learner_seed=4, task_kind="random_net", dataset=ds,
        num_iterations=1, steps_per_iter=0, batch_size=4,
    )
    assert result.records[0].final_mse == plain.records[0].final_mse


def test_sequence_with_aux_heads_trains():
    ds = _small_dataset(n=16)
    learner = nn.MlpSpec((2, 5, 1))
    cfg = infer.InferConfig(k=2, beta=10.0, alpha=0.1)
    result = tasks.run_sequence(
        learner, learner_seed=4, task_kind="random_net", dataset=ds,
        num_iterations=2, steps_per_iter=30, batch_size=8, infer_cfg=cfg,
    )
    assert len(result.records) == 2
    assert all(np.isfinite(r.final_mse) for r in result.records)


def test_sequence_csv_rows():
    ds = _small_dataset()
    result = tasks.run_sequence(
        nn.MlpSpec((2, 3, 1)), 0, "random_net", ds,
        num_iterations=2, steps_per_iter=1, batch_size=4,
    )
    assert tasks.SequenceResult.CSV_HEADER == [
        "iteration", "final_mse", "effective_dim", "srank", "steps"
    ]
    rows = result.csv_rows()
    assert len(rows) == 2
    assert rows[0][0] == "0" and rows[1][0] == "1"
    assert all(len(r) == 5 for r in rows)
    assert float(rows[0][1]) == result.records[0].final_mse


def test_sequence_rejects_unknown_kind():
    with pytest.raises(ValueError, match="kind"):
        tasks.run_sequence(nn.MlpSpec((2, 1)), 0, "nope", _small_dataset(),
                           num_iterations=1)
