"""Non-stationary sequential regression tasks and their target families."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import capacity, infer, nn

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049

GENERATOR_HIDDEN = (30, 30)  # target-generator networks: two width-30 ReLU layers
RANDOM_NET_SCALE = 10.0
HASH_PRE_SINE_SCALE = 1000.0

# Default optimization budget per iteration; hash targets are pure
# memorization and get the longer budget.
STEPS_RANDOM_NET = 3000
STEPS_HASH = 5000
STEPS_THRESHOLD = 3000

TARGET_KINDS = ("random_net", "hash", "threshold")


class IdxFormatError(ValueError):
    """Malformed IDX file: bad magic, truncation, or count mismatch."""


class MissingLabelsError(ValueError):
    """A threshold target was evaluated on a dataset without labels."""


@dataclass
class Dataset:
    """Inputs in [0,1]^dim with optional digit labels."""

    inputs: np.ndarray
    labels: Optional[np.ndarray] = None
    source: str = "synthetic"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError(f"inputs must be a non-empty 2-D matrix, got {self.inputs.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.inputs.shape[0],):
                raise ValueError("labels must be one integer per input row")
            if self.labels.min() < 0 or self.labels.max() > 9:
                raise ValueError("labels must lie in [0, 9]")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _read_exact(blob: bytes, offset: int, count: int, path) -> bytes:
    if offset + count > len(blob):
        raise IdxFormatError(f"{path}: truncated at offset {offset}, wanted {count} bytes")
    return blob[offset : offset + count]


def load_idx(images_path, labels_path=None) -> Dataset:
    """Parse big-endian IDX image (and optional label) files.

    Pixels are scaled to [0,1] by dividing by 255 and images are flattened
    row-major to one row per image.
    """
    with open(images_path, "rb") as fh:
        blob = fh.read()
    (magic,) = struct.unpack(">I", _read_exact(blob, 0, 4, images_path))
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad image magic {magic} at offset 0, expected {IDX_IMAGE_MAGIC}"
        )
    count, rows, cols = struct.unpack(">III", _read_exact(blob, 4, 12, images_path))
    pixels = np.frombuffer(
        _read_exact(blob, 16, count * rows * cols, images_path), dtype=np.uint8
    )
    inputs = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0

    labels = None
    if labels_path is not None:
        with open(labels_path, "rb") as fh:
            lblob = fh.read()
        (lmagic,) = struct.unpack(">I", _read_exact(lblob, 0, 4, labels_path))
        if lmagic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                f"{labels_path}: bad label magic {lmagic} at offset 0, expected {IDX_LABEL_MAGIC}"
            )
        (lcount,) = struct.unpack(">I", _read_exact(lblob, 4, 4, labels_path))
        if lcount != count:
            raise IdxFormatError(
                f"{labels_path}: {lcount} labels for {count} images"
            )
        labels = np.frombuffer(_read_exact(lblob, 8, lcount, labels_path), dtype=np.uint8)
        labels = labels.astype(np.int64)
    return Dataset(inputs=inputs, labels=labels, source="idx_file")


def synth_inputs(seed: int, n: int, dim: int, num_clusters: int) -> Dataset:
    """Clustered synthetic inputs: centers in [0.2,0.8]^dim plus clipped noise.

    Point j belongs to cluster j mod num_clusters; labels are the cluster
    index mod 10.
    """
    if min(n, dim, num_clusters) < 1:
        raise ValueError("n, dim and num_clusters must all be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, size=(num_clusters, dim))
    assignment = np.arange(n) % num_clusters
    points = centers[assignment] + rng.normal(0.0, 0.05, size=(n, dim))
    np.clip(points, 0.0, 1.0, out=points)
    return Dataset(inputs=points, labels=assignment % 10, source="synthetic")


@dataclass(frozen=True)
class TargetFn:
    """One target function from the random-net, hash, or threshold family."""

    kind: str
    seed: int
    input_dim: int
    generator_spec: Optional[nn.MlpSpec] = None
    generator_params: Optional[nn.Params] = None
    scale: float = 1.0
    threshold_index: int = 0


def make_target(kind: str, seed_or_index: int, input_dim: int) -> TargetFn:
    """Sample a target function; never reads any learner parameters.

    Random-net targets are 10x the output of a frozen random network; hash
    targets pass 1000x that output through a sine; threshold targets are the
    indicator label < i for the given iteration index i.
    """
    if kind not in TARGET_KINDS:
        raise ValueError(f"unknown target kind {kind!r}, expected one of {TARGET_KINDS}")
    if kind == "threshold":
        return TargetFn(kind=kind, seed=int(seed_or_index), input_dim=input_dim,
                        threshold_index=int(seed_or_index))
    gen_spec = nn.MlpSpec((input_dim, *GENERATOR_HIDDEN, 1))
    gen_params = nn.init_params(gen_spec, int(seed_or_index))
    scale = RANDOM_NET_SCALE if kind == "random_net" else HASH_PRE_SINE_SCALE
    return TargetFn(kind=kind, seed=int(seed_or_index), input_dim=input_dim,
                    generator_spec=gen_spec, generator_params=gen_params, scale=scale)


def eval_target(t: TargetFn, inputs: np.ndarray, labels: Optional[np.ndarray] = None) -> np.ndarray:
    """Evaluate a target function; returns an n-by-1 column of targets."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != t.input_dim:
        raise ValueError(f"inputs shape {inputs.shape} does not match target dim {t.input_dim}")
    if t.kind == "threshold":
        if labels is None:
            raise MissingLabelsError("threshold targets need a labeled dataset")
        labels = np.asarray(labels, dtype=np.int64)
        return (labels < t.threshold_index).astype(np.float64)[:, None]
    raw, _ = nn.forward(t.generator_params, t.generator_spec, inputs)
    if t.kind == "random_net":
        return t.scale * raw
    return np.sin(t.scale * raw)


def target_sampler(kind: str, input_dim: int, labels: Optional[np.ndarray] = None):
    """Adapter giving capacity probes a seed -> target-function mapping."""
    def sample(seed: int):
        t = make_target(kind, seed, input_dim)
        return lambda x: eval_target(t, x, labels)
    return sample


def default_steps(kind: str) -> int:
    return {"random_net": STEPS_RANDOM_NET, "hash": STEPS_HASH,
            "threshold": STEPS_THRESHOLD}[kind]


@dataclass
class SequenceRecord:
    iteration: int
    final_mse: float
    effective_dim: int
    srank: int
    steps: int


@dataclass
class SequenceResult:
    records: list[SequenceRecord] = field(default_factory=list)

    CSV_HEADER = ["iteration", "final_mse", "effective_dim", "srank", "steps"]

    def csv_rows(self) -> list[list[str]]:
        return [
            [str(r.iteration), format(r.final_mse, ".17g"), str(r.effective_dim),
             str(r.srank), str(r.steps)]
            for r in self.records
        ]

    def final_mses(self) -> np.ndarray:
        return np.array([r.final_mse for r in self.records])


def _iteration_target_seed(task_seed: int, iteration: int) -> int:
    # Stable mixing keeps the target schedule independent of numpy versions.
    return (int(task_seed) * 1_000_003 + iteration) % (2**63)


def run_sequence(
    learner_spec: nn.MlpSpec,
    learner_seed: int,
    task_kind: str,
    dataset: Dataset,
    num_iterations: int,
    steps_per_iter: Optional[int] = None,
    batch_size: int = 64,
    optimizer: Optional[nn.OptimizerState] = None,
    infer_cfg: Optional["infer.InferConfig"] = None,
    task_seed: int = 0,
    rank_epsilon: float = capacity.DEFAULT_EPSILON,
    rank_delta: float = capacity.DEFAULT_DELTA,
) -> SequenceResult:
    """Iterated retraining on freshly sampled targets.

    Each iteration samples a new target (threshold targets use the iteration
    index), trains the learner from its current parameters for a fixed step
    budget with seeded epoch shuffling, then records the final training MSE
    and the rank metrics of the learner's features over the full dataset.
    Network parameters carry across iterations; optimizer state does not.
    An all-zero feature matrix is recorded with srank 0.
    """
    if task_kind not in TARGET_KINDS:
        raise ValueError(f"unknown target kind {task_kind!r}")
    if steps_per_iter is None:
        steps_per_iter = default_steps(task_kind)
    if optimizer is None:
        optimizer = nn.make_optimizer("adam", 1e-3)

    spec = learner_spec
    params = nn.init_params(spec, learner_seed)
    theta0 = None
    if infer_cfg is not None:
        spec, params, theta0 = infer.attach_aux_heads(spec, params, infer_cfg)
    main_width = learner_spec.output_width

    inputs, labels, n = dataset.inputs, dataset.labels, dataset.n
    result = SequenceResult()
    for iteration in range(num_iterations):
        if task_kind == "threshold":
            target = make_target(task_kind, iteration, dataset.dim)
        else:
            target = make_target(task_kind, _iteration_target_seed(task_seed, iteration),
                                 dataset.dim)
        targets = eval_target(target, inputs, labels)

        state = nn.fresh_optimizer(optimizer)
        rng = np.random.default_rng(np.random.SeedSequence((learner_seed, task_seed, iteration)))
        order = rng.permutation(n)
        cursor = 0
        for _ in range(steps_per_iter):
            if cursor + batch_size > n:
                order = rng.permutation(n)
                cursor = 0
            idx = order[cursor : cursor + batch_size]
            cursor += batch_size
            x, y = inputs[idx], targets[idx]
            if infer_cfg is None:
                _, grads = nn.loss_and_grad(params, spec, x, y)
            else:
                _, grads = infer.combined_loss_grad(
                    lambda p: _main_head_loss_grad(p, spec, x, y, main_width),
                    params, theta0, spec, x, infer_cfg,
                )
            nn.optimizer_step(state, params, grads)

        outputs, features = nn.forward(params, spec, inputs)
        final_mse = float(np.mean((outputs[:, :main_width] - targets) ** 2))
        report = capacity.rank_report(features, epsilon=rank_epsilon, delta=rank_delta)
        result.records.append(SequenceRecord(
            iteration=iteration, final_mse=final_mse,
            effective_dim=report.effective_dim, srank=report.srank,
            steps=steps_per_iter,
        ))
    return result


def _main_head_loss_grad(params, spec, x, y, main_width):
    outputs, _, pullback = nn.forward_with_pullback(params, spec, x)
    diff = outputs[:, :main_width] - y
    loss = float(np.mean(diff * diff))
    d_out = np.zeros_like(outputs)
    d_out[:, :main_width] = diff * (2.0 / diff.size)
    return loss, pullback(d_out)
