"""Task streams, single-pass GKDE training and continual-learning metrics."""

from dataclasses import dataclass, field
import csv
import io
import logging

import numpy as np

from . import autodiff as ad
from .errors import ContractError, PlacementError
from .kde import DEFAULT_CLIP
from .model_bank import ModelBank, TaskEntry, score_task
from .network import AdamState, adam_step, embed, init_network
from .objective import LossConfig, gkde_loss
from .pdf_builder import build_task_pdfs, seed_sequence

log = logging.getLogger(__name__)


@dataclass
class TaskDataset:
    task_id: int
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    label_set: frozenset = None

    def __post_init__(self):
        if self.label_set is None:
            self.label_set = frozenset(int(y) for y in self.y_train)
        if len(self.y_train) < 1:
            raise ContractError(f"task {self.task_id} has no training rows")
        extra = {int(y) for y in np.concatenate([self.y_train, self.y_test])} - self.label_set
        if extra:
            raise ContractError(f"task {self.task_id} has labels {sorted(extra)} outside its label set")

    @property
    def input_dim(self) -> int:
        return self.x_train.shape[1]


class TaskStream:
    """Ordered tasks with single-pass access to training data.

    Each task's training rows may be iterated at most ``max_passes`` times,
    and only until a later task is opened. Test splits are unrestricted.
    """

    def __init__(self, tasks, max_passes=1):
        self.tasks = list(tasks)
        seen = set()
        for t in self.tasks:
            if t.label_set & seen:
                raise ContractError(f"task {t.task_id} reuses labels {sorted(t.label_set & seen)}")
            seen |= t.label_set
        ids = [t.task_id for t in self.tasks]
        if ids != sorted(set(ids)):
            raise ContractError("task ids must be strictly increasing")
        self.max_passes = max_passes
        self._current = -1
        self._passes = {}

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def fresh(self, max_passes=None) -> "TaskStream":
        """Same data, new cursor."""
        return TaskStream(self.tasks, self.max_passes if max_passes is None else max_passes)

    def _open(self, index):
        if index < self._current:
            raise ContractError(f"task {self.tasks[index].task_id} is closed: a later task has begun")
        self._current = index

    def task_features(self, index) -> tuple:
        """Training rows of the current task, for density construction."""
        self._open(index)
        t = self.tasks[index]
        return t.x_train, t.y_train

    def train_batches(self, index, batch_size, rng):
        """One shuffled pass over task ``index``'s training rows."""
        self._open(index)
        used = self._passes.get(index, 0)
        if used >= self.max_passes:
            raise ContractError(
                f"task {self.tasks[index].task_id}: pass {used + 1} requested, stream allows {self.max_passes}"
            )
        self._passes[index] = used + 1
        t = self.tasks[index]
        order = rng.permutation(len(t.y_train))
        for lo in range(0, len(order), batch_size):
            idx = order[lo : lo + batch_size]
            yield t.x_train[idx], t.y_train[idx]

    def test_data(self, upto=None):
        """Concatenated test rows of the first ``upto`` tasks plus task indices."""
        tasks = self.tasks[:upto]
        X = np.concatenate([t.x_test for t in tasks])
        y = np.concatenate([t.y_test for t in tasks])
        owner = np.concatenate([np.full(len(t.y_test), i) for i, t in enumerate(tasks)])
        return X, y, owner


# ------------------------------------------------------------------ datasets


def _stratified_split(labels, test_fraction, rng):
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_test = min(int(round(test_fraction * idx.size)), idx.size - 1)
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(test, dtype=int))


def _place_centers(k, dim, separation, rng, patience=1000, max_draws=1_000_000):
    if not separation > 0:
        raise PlacementError(f"separation must be positive, got {separation}")
    side = separation * max(1.0, k ** (1.0 / dim))
    centers = np.empty((0, dim))
    misses = draws = 0
    while len(centers) < k:
        if draws >= max_draws:
            raise PlacementError(f"could not place {k} centers {separation} apart in {dim} dimensions")
        c = rng.uniform(-side / 2, side / 2, size=dim)
        draws += 1
        if len(centers) and np.min(np.linalg.norm(centers - c, axis=1)) < separation:
            misses += 1
            if misses >= patience:
                side *= 1.1
                misses = 0
            continue
        centers = np.vstack([centers, c])
        misses = 0
    return centers


def blob_arrays(tasks, classes_per_task, dim, separation, samples_per_class, seed, cluster_std=1.0):
    """All blob rows ``(X, y)`` plus the task partition of labels."""
    if min(tasks, classes_per_task, dim, samples_per_class) < 1:
        raise ContractError("task, class, dimension and sample counts must be positive")
    rng = np.random.default_rng(seed)
    k = tasks * classes_per_task
    centers = _place_centers(k, dim, separation, rng)
    X = np.concatenate([c + cluster_std * rng.standard_normal((samples_per_class, dim)) for c in centers])
    y = np.repeat(np.arange(k), samples_per_class)
    partition = [list(range(t * classes_per_task, (t + 1) * classes_per_task)) for t in range(tasks)]
    return X, y, partition


def stream_from_arrays(X, y, partition, seed, test_fraction=0.2, max_passes=1) -> TaskStream:
    """Group rows by the task partition and split each task train/test."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    owner = {}
    for t, labels in enumerate(partition):
        for c in labels:
            if c in owner:
                raise ContractError(f"label {c} appears in more than one task of the partition")
            owner[int(c)] = t
    missing = sorted(set(np.unique(y).tolist()) - set(owner))
    if missing:
        raise ContractError(f"label {missing[0]} is present in the data but absent from the task partition")
    children = seed_sequence(seed).spawn(len(partition))
    tasks = []
    for t, labels in enumerate(partition):
        rows = np.flatnonzero(np.isin(y, labels))
        absent = sorted(set(labels) - set(y[rows].tolist()))
        if absent:
            raise ContractError(f"task {t + 1}: labels {absent} have no rows")
        tr, te = _stratified_split(y[rows], test_fraction, np.random.default_rng(children[t]))
        tasks.append(
            TaskDataset(t + 1, X[rows][tr], y[rows][tr], X[rows][te], y[rows][te], frozenset(int(c) for c in labels))
        )
    return TaskStream(tasks, max_passes)


def synth_blobs(tasks, classes_per_task, dim, separation, samples_per_class, seed, cluster_std=1.0) -> TaskStream:
    """Gaussian blobs, one per class, centers at least ``separation`` apart.

    Deterministic in ``seed``; each task is split 80/20 train/test.
    """
    X, y, partition = blob_arrays(tasks, classes_per_task, dim, separation, samples_per_class, seed, cluster_std)
    return stream_from_arrays(X, y, partition, seed)


def write_csv(path, X, y):
    """Rows ``f0..f{d-1},label`` with a header; floats in shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(X.shape[1])] + ["label"])
        for row, label in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def read_csv(path, label_column="label", header=True):
    """Parse a numeric CSV into ``(X, y)``; errors cite 1-based line numbers."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContractError(f"{path}: empty file")
    names = None
    line0 = 1
    if header:
        names, rows, line0 = rows[0], rows[1:], 2
    width = len(names) if names else len(rows[0]) if rows else 0
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if names is None or label_column not in names:
            raise ContractError(f"{path}: no column named {label_column!r}")
        col = names.index(label_column)
    else:
        col = int(label_column) % width if width else 0
    values = []
    for i, row in enumerate(rows):
        line = line0 + i
        if not row:
            continue
        if len(row) != width:
            raise ContractError(f"{path}: line {line} has {len(row)} fields, expected {width}")
        try:
            values.append([float(v) for v in row])
        except ValueError:
            bad = next(j for j, v in enumerate(row) if not _is_float(v))
            raise ContractError(f"{path}: line {line}, column {bad + 1}: non-numeric value {row[bad]!r}") from None
        if not float(row[col]).is_integer():
            raise ContractError(f"{path}: line {line}: label {row[col]!r} is not an integer")
    if not values:
        raise ContractError(f"{path}: no data rows")
    data = np.array(values)
    y = data[:, col].astype(int)
    X = np.delete(data, col, axis=1)
    return X, y


def _is_float(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


def ingest_csv(path, label_column, partition, seed=0, header=True, test_fraction=0.2, max_passes=1) -> TaskStream:
    X, y = read_csv(path, label_column, header)
    return stream_from_arrays(X, y, partition, seed, test_fraction, max_passes)


# ------------------------------------------------------------------ training


@dataclass
class TrainConfig:
    dim: int = 32
    bandwidth: float = 0.5
    n_anchors: int = 500
    clip: float = DEFAULT_CLIP
    epochs: int = 1
    learning_rate: float = 5e-4
    weight_decay: float = 1e-4
    decoupled_weight_decay: bool = True
    batch_size: int = 128
    seed: int = 0
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    init_gain: float = 3.0**0.5  # weight variance 1/fan_in
    warmup_epochs: int = 0
    refresh_anchors_every_epoch: bool = False
    repulsion_prior: str = "per_class"

    @property
    def passes_per_task(self) -> int:
        return self.warmup_epochs + self.epochs


def train_task(stream: TaskStream, index: int, config: TrainConfig, seed) -> TaskEntry:
    """Fresh network, anchors from its embedding, GKDE passes, then freeze."""
    task = stream.tasks[index]
    ss_init, ss_shuffle, ss_anchor = seed_sequence(seed).spawn(3)
    params = init_network(
        task.input_dim, config.hidden, config.dim, np.random.default_rng(ss_init), config.activation, config.init_gain
    )
    state = AdamState(
        learning_rate=config.learning_rate,
        weight_decay=config.weight_decay,
        decoupled=config.decoupled_weight_decay,
    )
    loss_cfg = LossConfig(config.bandwidth, config.clip, "mean", config.repulsion_prior)
    shuffle_rng = np.random.default_rng(ss_shuffle)
    anchor_seeds = iter(ss_anchor.spawn(config.passes_per_task + 1))

    def build_pdfs():
        X, y = stream.task_features(index)
        Z = embed(params, X).data
        return build_task_pdfs(Z, y, config.n_anchors, config.bandwidth, next(anchor_seeds))

    def one_pass(pdfs):
        total, count = 0.0, 0
        for xb, yb in stream.train_batches(index, config.batch_size, shuffle_rng):
            with ad.Tape() as tape:
                loss = gkde_loss(pdfs, embed(params, xb), yb, loss_cfg)
            adam_step(state, params, ad.backward(tape, loss, wrt=params.tensors()))
            total += loss.item() * len(yb)
            count += len(yb)
        return total / max(count, 1)

    for _ in range(config.warmup_epochs):
        one_pass(build_pdfs())
    pdfs = build_pdfs()
    for epoch in range(config.epochs):
        if epoch and config.refresh_anchors_every_epoch:
            pdfs = build_pdfs()
        mean_loss = one_pass(pdfs)
        log.debug("task %d epoch %d loss %.6g", task.task_id, epoch + 1, mean_loss)
    return TaskEntry(task.task_id, params.frozen(), pdfs)


def train_stream(stream: TaskStream, config: TrainConfig, bank=None, on_task=None) -> ModelBank:
    """Train every task of ``stream`` in order and append it to the bank."""
    bank = ModelBank(clip=config.clip) if bank is None else bank
    if stream.max_passes < config.passes_per_task:
        stream = stream.fresh(config.passes_per_task)
    seeds = seed_sequence(config.seed).spawn(len(stream))
    for i, task in enumerate(stream.tasks):
        entry = train_task(stream, i, config, seeds[i])
        bank.add_task(entry)
        log.info("trained task %d (%d rows, labels %s)", task.task_id, len(task.y_train), sorted(task.label_set))
        if on_task is not None:
            on_task(bank, i)
    return bank


# ---------------------------------------------------------------- evaluation


@dataclass
class AccuracyMatrix:
    """``values[i, j]``: accuracy on task j after training tasks 0..i (0-based);
    NaN above the diagonal."""

    values: np.ndarray

    @property
    def n_tasks(self) -> int:
        return self.values.shape[0]

    def row(self, i) -> np.ndarray:
        return self.values[i, : i + 1]


def average_accuracy(m: AccuracyMatrix, T=None) -> float:
    """Mean of the accuracies on tasks 1..T after training task T."""
    T = m.n_tasks if T is None else T
    row = m.values[T - 1, :T]
    if row.size < T or np.any(np.isnan(row)):
        raise ContractError(f"accuracy row {T} is incomplete")
    return float(np.mean(row))


def average_forgetting(m: AccuracyMatrix, T=None) -> float:
    """Mean over tasks j < T of (best earlier accuracy on j) - (final accuracy on j)."""
    T = m.n_tasks if T is None else T
    if T < 2:
        raise ContractError("forgetting needs at least two tasks")
    block = m.values[:T, :T]
    if np.any(np.isnan(block[np.tril_indices(T)])):
        raise ContractError("accuracy matrix has missing entries")
    drops = [np.max(block[j : T - 1, j]) - block[T - 1, j] for j in range(T - 1)]
    return float(np.mean(drops))


@dataclass
class StreamReport:
    matrix: AccuracyMatrix
    stages: list = field(default_factory=list)  # dicts: task, tp_acc, wp_acc, overall_acc

    @property
    def final(self) -> dict:
        return self.stages[-1]


def _stage_decision(tables):
    """Vectorised TP then WP over score tables; returns (task index, label)."""
    best = np.stack([t.best for t in tables], axis=1)
    winner = np.argmax(best, axis=1)
    labels = np.empty(best.shape[0], dtype=int)
    for k, t in enumerate(tables):
        sel = winner == k
        if sel.any():
            s = t.log_priors[None, :] + t.log_dens[sel]
            labels[sel] = t.labels[np.argmax(s, axis=1)]
    return winner, labels


def evaluate_stream(bank: ModelBank, stream: TaskStream) -> StreamReport:
    """Accuracy matrix and per-stage TP/WP/overall accuracy.

    Bank entries are frozen, so the bank after stage i is its first i
    entries; each entry's scores on the test rows are computed once.
    """
    T = len(stream)
    if len(bank) < T:
        raise ContractError(f"bank has {len(bank)} entries, stream has {T} tasks")
    X, y, owner = stream.test_data()
    tables = [score_task(e, X, bank.clip) for e in bank.entries[:T]]
    wp_ok = np.zeros(len(y), dtype=bool)
    for k, t in enumerate(tables):
        sel = owner == k
        s = t.log_priors[None, :] + t.log_dens[sel]
        wp_ok[sel] = t.labels[np.argmax(s, axis=1)] == y[sel]
    values = np.full((T, T), np.nan)
    stages = []
    for i in range(T):
        seen = owner <= i
        winner, labels = _stage_decision([t.restrict(seen) for t in tables[: i + 1]])
        ok = labels == y[seen]
        for j in range(i + 1):
            values[i, j] = float(np.mean(ok[owner[seen] == j]))
        stages.append(
            {
                "task": stream.tasks[i].task_id,
                "tp_acc": float(np.mean(winner == owner[seen])),
                "wp_acc": float(np.mean(wp_ok[seen])),
                "overall_acc": float(np.mean(ok)),
            }
        )
    return StreamReport(AccuracyMatrix(values), stages)


def metrics_csv(report: StreamReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "tp_acc", "wp_acc", "overall_acc"])
    for s in report.stages:
        w.writerow([s["task"], f"{s['tp_acc']:.6f}", f"{s['wp_acc']:.6f}", f"{s['overall_acc']:.6f}"])
    return buf.getvalue()


def summary_text(report: StreamReport) -> str:
    m = report.matrix
    lines = [f"tasks: {m.n_tasks}", f"average_accuracy: {average_accuracy(m):.6f}"]
    if m.n_tasks >= 2:
        lines.append(f"average_forgetting: {average_forgetting(m):.6f}")
    f = report.final
    lines += [f"tp_accuracy: {f['tp_acc']:.6f}", f"wp_accuracy: {f['wp_acc']:.6f}"]
    lines.append("accuracy_matrix:")
    for i in range(m.n_tasks):
        lines.append("  " + " ".join(f"{v:.4f}" for v in m.row(i)))
    return "\n".join(lines) + "\n"


__all__ = [
    "TaskDataset", "TaskStream", "synth_blobs", "blob_arrays", "stream_from_arrays", "ingest_csv",
    "read_csv", "write_csv", "TrainConfig", "train_task", "train_stream", "AccuracyMatrix",
    "average_accuracy", "average_forgetting", "evaluate_stream", "StreamReport", "metrics_csv",
    "summary_text",
]
