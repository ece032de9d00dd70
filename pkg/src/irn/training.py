"""SGD training loop, norm projection, and binary checkpoints.

The optimizer is plain SGD with an optional global gradient-norm clip;
after every update the touched rows of the input-entity table are projected
back to unit L2 norm. Model selection is by filtered validation Hits@10,
and the whole run is a pure function of (seed, config, data): reruns give
bit-identical trajectories and checkpoints.

Checkpoint layout (little-endian): magic ``IRN1``; uint32 format version;
uint32 JSON header length; the header ``{"format_version", "meta",
"params": [{"name", "shape"}, ...]}``; then each parameter's float64
C-order bytes in manifest order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ranking
from .data import batch_iter, reverse_queries, sample_negatives
from .tape import Tape, zero_grads

CHECKPOINT_MAGIC = b"IRN1"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.01
    batch_size: int = 64
    seed: int = 0
    grad_clip: float = 5.0      # <= 0 disables
    patience: int = 0           # 0 disables early stopping
    eval_threads: int = 1
    warmup_epochs: int = 0      # path trainer only: log-surrogate epochs first
    freeze: tuple = ()          # parameter names kept at their initial values

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")


def updatable_params(params, freeze):
    """Params minus the frozen names; unknown freeze names are an error."""
    if not freeze:
        return list(params)
    frozen = set(freeze)
    unknown = frozen - {p.name for p in params}
    if unknown:
        raise ValueError(f"freeze names not found in the model: {sorted(unknown)}")
    return [p for p in params if p.name not in frozen]


def sgd_step(params, lr, grad_clip=0.0, renorm=()):
    """p <- p - lr * grad for every parameter, then project rows to unit norm.

    grad_clip > 0 rescales all gradients jointly when the global L2 norm
    exceeds it. renorm is a sequence of (parameter, row ids) pairs whose
    given rows are rescaled to unit L2 after the update (ids None = all
    rows). Raises on any non-finite gradient, naming the parameter.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in parameter {p.name!r}")
    if grad_clip and grad_clip > 0:
        total = np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))
        if total > grad_clip:
            factor = grad_clip / total
            for p in params:
                p.grad *= factor
    for p in params:
        p.data -= lr * p.grad
    for p, ids in renorm:
        rows = p.data if ids is None else p.data[ids]
        norms = np.linalg.norm(rows, axis=-1, keepdims=True)
        np.maximum(norms, 1e-12, out=norms)
        if ids is None:
            p.data /= norms
        else:
            p.data[ids] = rows / norms


@dataclass
class TrainResult:
    best_epoch: int = 0
    best_hits10: float = 0.0
    history: list = field(default_factory=list)  # (epoch, mean loss, valid hits@10)
    rng_state: dict = None      # training generator state at exit, JSON-clean


def snapshot_params(params):
    return {p.name: p.data.copy() for p in params}


def restore_params(params, snapshot):
    for p in params:
        if p.name not in snapshot:
            raise KeyError(f"snapshot is missing parameter {p.name!r}")
        if snapshot[p.name].shape != p.data.shape:
            raise ValueError(
                f"parameter {p.name!r} has shape {p.data.shape}, snapshot has {snapshot[p.name].shape}"
            )
        p.data[...] = snapshot[p.name]


def train_kbc(model, train_triples, valid_triples, filter_index, n_original_relations, config, log=None):
    """Train a KbcModel; leaves the best-validation parameters in the model.

    train_triples must already include reverse facts; validation queries are
    built here in both directions. Returns a TrainResult with the loss /
    Hits@10 history.
    """
    if train_triples.shape[0] == 0:
        raise ValueError("empty training set")
    params = model.params()
    updates = updatable_params(params, config.freeze)
    rng = np.random.default_rng(config.seed)
    n_entities = model.config.n_entities
    n_neg = model.config.n_negatives
    valid_queries = np.concatenate(
        [valid_triples, reverse_queries(valid_triples, n_original_relations)], axis=0
    )
    result = TrainResult()
    best = None
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        loss_sum = 0.0
        n_seen = 0
        for batch_idx, batch in enumerate(batch_iter(rng, train_triples, config.batch_size)):
            heads, rels, gold = batch[:, 0], batch[:, 1], batch[:, 2]
            negatives = np.stack([sample_negatives(rng, n_entities, int(g), n_neg) for g in gold])
            zero_grads(params)
            with Tape() as t:
                trace = model.machine.unroll(model.encode(heads, rels))
                loss = model.objective(trace, gold, negatives)
                if not np.isfinite(loss.data):
                    raise FloatingPointError(
                        f"non-finite loss at epoch {epoch} batch {batch_idx} (seed {config.seed})"
                    )
                t.backward(loss)
            touched = np.unique(heads)
            sgd_step(
                updates,
                config.learning_rate,
                grad_clip=config.grad_clip,
                renorm=[(model.input_entities, touched)],
            )
            loss_sum += float(loss.data) * batch.shape[0]
            n_seen += batch.shape[0]
        mean_loss = loss_sum / n_seen
        val = ranking.evaluate(model, valid_queries, filter_index, threads=config.eval_threads)
        result.history.append((epoch, mean_loss, val.hits10))
        if log is not None:
            log(f"epoch {epoch}: loss {mean_loss:.6f} valid hits@10 {val.hits10:.4f}")
        if best is None or val.hits10 > result.best_hits10:
            result.best_hits10 = val.hits10
            result.best_epoch = epoch
            best = snapshot_params(params)
            since_best = 0
        else:
            since_best += 1
            if config.patience and since_best >= config.patience:
                break
    restore_params(params, best)
    result.rng_state = _generator_state(rng)
    return result


def _generator_state(rng):
    """Bit-generator state as plain JSON types (ints stay exact)."""
    def clean(x):
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, np.integer):
            return int(x)
        return x
    return clean(rng.bit_generator.state)


def save_checkpoint(path, params, meta):
    """Write parameters plus a JSON-serializable meta dict. Deterministic:
    equal inputs give byte-identical files."""
    manifest = [{"name": p.name, "shape": list(p.data.shape)} for p in params]
    header = json.dumps(
        {"format_version": CHECKPOINT_VERSION, "meta": meta, "params": manifest},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read (meta, {name: array}) from a checkpoint file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: checkpoint format version {version}, this build reads {CHECKPOINT_VERSION}")
    if len(blob) < 12 + header_len:
        raise ValueError(f"{path}: truncated checkpoint header")
    header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    offset = 12 + header_len
    arrays = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        chunk = blob[offset:offset + nbytes]
        if len(chunk) < nbytes:
            raise ValueError(f"{path}: truncated payload for parameter {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes after last parameter")
    return header["meta"], arrays


def load_into(params, arrays):
    """Copy loaded arrays into live parameters, checking names and shapes."""
    names = {p.name for p in params}
    missing = names - set(arrays)
    extra = set(arrays) - names
    if missing or extra:
        raise ValueError(f"checkpoint/model parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for p in params:
        if arrays[p.name].shape != p.data.shape:
            raise ValueError(
                f"parameter {p.name!r}: model expects shape {p.data.shape}, checkpoint has {arrays[p.name].shape}"
            )
    for p in params:
        p.data[...] = arrays[p.name]
