"""Model Bank: frozen per-task networks and class densities.

Inference for an input x without task id:

* task prediction: embed x with every task's network, take the best class
  log density per task, pick the task with the largest value (ties go to
  the smallest task id);
* within-task prediction: Bayes rule over that task's classes,
  posterior_j proportional to prior_j * k_j(z) (ties go to the smallest label);
* the reported probability is posterior * tp_probability, where
  tp_probability is a softmax of the per-task best log densities. The softmax
  only produces the number; the decision uses the raw argmax.

On disk a bank is a directory holding ``manifest.json`` and one binary file
per task (see :func:`save`).
"""

from dataclasses import dataclass, field
import json
import math
import os
import struct

import numpy as np
from scipy.special import logsumexp

from .autodiff import Tensor
from .errors import BankFormatError, BankVersionError, ContractError, ShapeError
from .kde import DEFAULT_CLIP, ClassPdf, log_density_matrix
from .network import NetworkParams, embed

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
FILE_MAGIC = b"GKTE"


@dataclass
class TaskEntry:
    task_id: int
    params: NetworkParams
    class_pdfs: list

    def __post_init__(self):
        self.class_pdfs = sorted(self.class_pdfs, key=lambda p: p.class_label)
        labels = [p.class_label for p in self.class_pdfs]
        if not labels:
            raise ContractError(f"task {self.task_id} has no class pdfs")
        if len(set(labels)) != len(labels):
            raise ContractError(f"task {self.task_id} has duplicate class labels")
        total = math.fsum(p.prior for p in self.class_pdfs)
        if abs(total - 1.0) > 1e-12:
            raise ContractError(f"task {self.task_id} priors sum to {total!r}, not 1")
        for p in self.class_pdfs:
            if p.dim != self.params.dim:
                raise ShapeError(f"class {p.class_label} anchors have dimension {p.dim}, network emits {self.params.dim}")

    @property
    def label_set(self) -> frozenset:
        return frozenset(p.class_label for p in self.class_pdfs)

    @property
    def labels(self) -> list:
        return [p.class_label for p in self.class_pdfs]


@dataclass(frozen=True)
class Prediction:
    task_id: int
    class_label: int
    tp_score: float  # best class log density of the winning task
    tp_probability: float
    wp_posterior: float
    combined_log_prob: float
    task_scores: tuple = ()  # best log density per task, bank order

    @property
    def combined_probability(self) -> float:
        return math.exp(self.combined_log_prob)


@dataclass
class ScoreTable:
    """Per-class clipped log densities of a batch under one task's entry."""

    task_id: int
    labels: np.ndarray  # (m,)
    log_priors: np.ndarray  # (m,)
    log_dens: np.ndarray  # (N, m)

    @property
    def best(self) -> np.ndarray:
        return self.log_dens.max(axis=1)

    def restrict(self, rows) -> "ScoreTable":
        return ScoreTable(self.task_id, self.labels, self.log_priors, self.log_dens[rows])


def score_task(entry: TaskEntry, X, clip=DEFAULT_CLIP) -> ScoreTable:
    Z = embed(entry.params, X).data
    cols = [log_density_matrix(p, Z, clip) for p in entry.class_pdfs]
    return ScoreTable(
        entry.task_id,
        np.array(entry.labels),
        np.log([p.prior for p in entry.class_pdfs]),
        np.stack(cols, axis=1),
    )


def within_task(table: ScoreTable):
    """Bayes decision inside one task; returns (label index, log posteriors)."""
    s = table.log_priors[None, :] + table.log_dens
    log_post = s - logsumexp(s, axis=1, keepdims=True)
    return np.argmax(s, axis=1), log_post


def decide(tables: list) -> list:
    """Combine score tables of several tasks (bank order) into predictions."""
    if not tables:
        raise ContractError("model bank is empty")
    best = np.stack([t.best for t in tables], axis=1)  # (N, T)
    winner = np.argmax(best, axis=1)
    log_tp = best - logsumexp(best, axis=1, keepdims=True)
    wp = [within_task(t) for t in tables]
    out = []
    for i, t in enumerate(winner):
        j, log_post = wp[t][0][i], wp[t][1][i]
        lp = float(log_post[j])
        ltp = float(log_tp[i, t])
        out.append(
            Prediction(
                task_id=int(tables[t].task_id),
                class_label=int(tables[t].labels[j]),
                tp_score=float(best[i, t]),
                tp_probability=math.exp(ltp),
                wp_posterior=math.exp(lp),
                combined_log_prob=lp + ltp,
                task_scores=tuple(float(v) for v in best[i]),
            )
        )
    return out


@dataclass
class ModelBank:
    dim: int = None
    bandwidth: float = None
    clip: float = DEFAULT_CLIP
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def labels(self) -> set:
        return set().union(*(e.label_set for e in self.entries)) if self.entries else set()

    def entry(self, task_id) -> TaskEntry:
        for e in self.entries:
            if e.task_id == task_id:
                return e
        raise KeyError(task_id)

    def add_task(self, entry: TaskEntry) -> "ModelBank":
        if self.entries and entry.task_id <= self.entries[-1].task_id:
            raise ContractError(f"task id {entry.task_id} is not greater than {self.entries[-1].task_id}")
        clash = entry.label_set & self.labels
        if clash:
            raise ContractError(f"labels {sorted(clash)} already belong to an earlier task")
        dim, hs = entry.params.dim, {p.bandwidth for p in entry.class_pdfs}
        if len(hs) != 1:
            raise ContractError(f"task {entry.task_id} mixes bandwidths {sorted(hs)}")
        (h,) = hs
        if not h > 0:
            raise ContractError(f"task {entry.task_id} has non-positive bandwidth {h}")
        if self.dim is None:
            self.dim, self.bandwidth = dim, h
        elif (dim, h) != (self.dim, self.bandwidth):
            raise ContractError(
                f"task {entry.task_id} has (d, h) = ({dim}, {h}); bank uses ({self.dim}, {self.bandwidth})"
            )
        self.entries.append(entry)
        return self

    def score(self, X) -> list:
        return [score_task(e, X, self.clip) for e in self.entries]

    def predict_task(self, x):
        """Winning task id and the per-task best log densities for one input."""
        tables = self.score(np.atleast_2d(x))
        if not tables:
            raise ContractError("model bank is empty")
        best = np.array([t.best[0] for t in tables])
        return self.entries[int(np.argmax(best))].task_id, best

    def predict_within_task(self, entry: TaskEntry, z):
        """Bayes class and posterior vector for an embedding ``z`` of ``entry``."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != entry.params.dim:
            raise ShapeError(f"embedding has dimension {z.shape[1]}, task uses {entry.params.dim}")
        cols = [log_density_matrix(p, z, self.clip) for p in entry.class_pdfs]
        table = ScoreTable(entry.task_id, np.array(entry.labels),
                           np.log([p.prior for p in entry.class_pdfs]), np.stack(cols, axis=1))
        j, log_post = within_task(table)
        return entry.labels[int(j[0])], np.exp(log_post[0])

    def predict(self, x) -> Prediction:
        return decide(self.score(np.atleast_2d(x)))[0]

    def predict_many(self, X) -> list:
        return decide(self.score(np.atleast_2d(X)))


# ------------------------------------------------------------- persistence


def _section(tag: bytes, arr) -> bytes:
    arr = np.atleast_2d(np.asarray(arr, dtype="<f8"))
    rows, cols = arr.shape
    return tag + struct.pack("<QQ", rows, cols) + np.ascontiguousarray(arr).tobytes()


def encode_task(entry: TaskEntry) -> bytes:
    parts = [FILE_MAGIC, struct.pack("<IQ", FORMAT_VERSION, entry.task_id)]
    for W, b in entry.params.extractor:
        parts += [_section(b"EXTW", W.data), _section(b"EXTB", b.data)]
    W, b = entry.params.projection
    parts += [_section(b"PRJW", W.data), _section(b"PRJB", b.data)]
    for p in entry.class_pdfs:
        parts.append(_section(b"CLAS", [float(p.class_label), p.prior]))
        parts.append(_section(b"ANCH", p.anchors))
        if p.mean is not None:
            parts.append(_section(b"MEAN", p.mean))
        if p.var is not None:
            parts.append(_section(b"VARI", p.var))
    return b"".join(parts)


def _frozen(arr) -> Tensor:
    t = Tensor(arr)
    t.data.setflags(write=False)
    return t


def decode_task(buf: bytes, activation: str, bandwidth: float, path=None) -> TaskEntry:
    def fail(msg, off):
        raise BankFormatError(msg, offset=off, path=path)

    if len(buf) < 16:
        fail("file shorter than its header", len(buf))
    if buf[:4] != FILE_MAGIC:
        fail(f"bad magic {buf[:4]!r}", 0)
    version, task_id = struct.unpack_from("<IQ", buf, 4)
    if version != FORMAT_VERSION:
        raise BankVersionError(f"task file version {version}, expected {FORMAT_VERSION}", offset=4, path=path)
    off = 16
    extractor, pending, projection = [], None, [None, None]
    classes = []
    while off < len(buf):
        if off + 20 > len(buf):
            fail("truncated section header", off)
        tag = buf[off : off + 4]
        rows, cols = struct.unpack_from("<QQ", buf, off + 4)
        nbytes = rows * cols * 8
        start = off + 20
        if start + nbytes > len(buf):
            fail(f"section {tag!r} declares {rows}x{cols} values past end of file", off)
        arr = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=start).reshape(rows, cols).astype(np.float64)
        if tag == b"EXTW":
            pending = arr
        elif tag == b"EXTB":
            if pending is None:
                fail("EXTB without preceding EXTW", off)
            extractor.append((_frozen(pending), _frozen(arr[0])))
            pending = None
        elif tag == b"PRJW":
            projection[0] = arr
        elif tag == b"PRJB":
            projection[1] = arr[0]
        elif tag == b"CLAS":
            if arr.shape != (1, 2) or arr[0, 0] != int(arr[0, 0]):
                fail("malformed class header", off)
            classes.append({"label": int(arr[0, 0]), "prior": float(arr[0, 1])})
        elif tag in (b"ANCH", b"MEAN", b"VARI"):
            if not classes:
                fail(f"{tag!r} before any CLAS section", off)
            classes[-1][tag.decode()] = arr
        else:
            fail(f"unknown section tag {tag!r}", off)
        off = start + nbytes
    if projection[0] is None or projection[1] is None or pending is not None:
        fail("incomplete network sections", off)
    try:
        params = NetworkParams(extractor, (_frozen(projection[0]), _frozen(projection[1])), activation)
        pdfs = [
            ClassPdf(
                c["label"],
                c["ANCH"],
                bandwidth,
                c["prior"],
                c["MEAN"][0] if "MEAN" in c else None,
                c["VARI"][0] if "VARI" in c else None,
            )
            for c in classes
        ]
        return TaskEntry(int(task_id), params, pdfs)
    except (KeyError, ContractError, ShapeError) as exc:
        raise BankFormatError(f"inconsistent task contents: {exc}", offset=None, path=path) from None


def _manifest(bank: ModelBank) -> dict:
    return {
        "format": "gkde-model-bank",
        "version": FORMAT_VERSION,
        "dim": bank.dim,
        "bandwidth": bank.bandwidth,
        "clip": bank.clip,
        "tasks": [
            {
                "task_id": e.task_id,
                "file": f"task_{e.task_id:06d}.bin",
                "labels": e.labels,
                "activation": e.params.activation,
            }
            for e in bank.entries
        ],
    }


def save(bank: ModelBank, path) -> None:
    """Write ``bank`` as a directory: ``manifest.json`` plus one file per task.

    Task files are ``GKTE`` magic, u32 version, u64 task id, then tagged
    sections ``tag[4] rows:u64 cols:u64 rows*cols f64``, all little-endian.
    """
    os.makedirs(path, exist_ok=True)
    manifest = _manifest(bank)
    for e, meta in zip(bank.entries, manifest["tasks"]):
        with open(os.path.join(path, meta["file"]), "wb") as fh:
            fh.write(encode_task(e))
    with open(os.path.join(path, MANIFEST), "w") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load(path) -> ModelBank:
    mpath = os.path.join(path, MANIFEST)
    try:
        with open(mpath) as fh:
            text = fh.read()
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BankFormatError(f"manifest is not valid JSON ({exc.msg})", offset=exc.pos, path=mpath) from None
    if not isinstance(manifest, dict) or manifest.get("format") != "gkde-model-bank":
        raise BankFormatError("not a gkde model-bank manifest", offset=0, path=mpath)
    if manifest.get("version") != FORMAT_VERSION:
        raise BankVersionError(f"manifest version {manifest.get('version')!r}, expected {FORMAT_VERSION}", path=mpath)
    bank = ModelBank(clip=float(manifest["clip"]))
    for meta in manifest["tasks"]:
        fpath = os.path.join(path, meta["file"])
        with open(fpath, "rb") as fh:
            buf = fh.read()
        entry = decode_task(buf, meta["activation"], float(manifest["bandwidth"]), path=fpath)
        if entry.task_id != meta["task_id"] or entry.labels != list(meta["labels"]):
            raise BankFormatError("task file disagrees with manifest", path=fpath)
        bank.add_task(entry)
    if manifest["tasks"] and bank.dim != manifest["dim"]:
        raise BankFormatError("manifest dimension disagrees with task files", path=mpath)
    return bank
