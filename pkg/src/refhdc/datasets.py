"""Benchmark dataset readers and client partitioning.

Readers are strict: a wrong magic number, a short file, trailing bytes or an
out-of-range label raises :class:`ParseError` naming the file and the byte
offset (or line number for text files) instead of returning partial data.
"""

from __future__ import annotations

import gzip
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .errors import InvalidArgumentError, ParseError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32
UCI_HAR_FEATURES = 561
UCI_HAR_CLASSES = 6


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int

    @property
    def feature_dim(self) -> int:
        return self.train_x.shape[1]

    @property
    def num_train(self) -> int:
        return self.train_x.shape[0]


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    raw = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise ParseError(path, len(raw), "file too short for an IDX magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise ParseError(path, 0, f"bad magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise ParseError(path, len(raw), f"truncated header, need {header} bytes")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = header + math.prod(dims)
    if len(raw) < expected:
        raise ParseError(
            path, len(raw), f"truncated: dims {dims} need {expected} bytes, file has {len(raw)}"
        )
    if len(raw) > expected:
        raise ParseError(path, expected, f"{len(raw) - expected} trailing bytes after data")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def _check_labels(path, labels: np.ndarray, num_classes: int, base_offset: int):
    bad = np.flatnonzero(labels >= num_classes)
    if bad.size:
        i = int(bad[0])
        raise ParseError(
            path, base_offset + i, f"label {labels[i]} outside [0, {num_classes})"
        )


def read_idx_pair(images_path, labels_path):
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise ParseError(
            labels_path,
            4,
            f"{labels.shape[0]} labels but {images_path} holds {images.shape[0]} images",
        )
    _check_labels(labels_path, labels, 10, 8)
    x = images.reshape(images.shape[0], -1).astype(np.float64)
    return x, labels.astype(np.int64)


def load_mnist_idx(train_images, train_labels, test_images, test_labels, name="mnist"):
    """MNIST or Fashion-MNIST from IDX files (optionally gzipped)."""
    train_x, train_y = read_idx_pair(train_images, train_labels)
    test_x, test_y = read_idx_pair(test_images, test_labels)
    if train_x.shape[1] != test_x.shape[1]:
        raise ParseError(test_images, 8, "image size differs from the training images")
    return Dataset(name, train_x, train_y, test_x, test_y, 10)


def read_cifar10_batch(path):
    raw = _read_bytes(path)
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise ParseError(
            path,
            len(raw) - len(raw) % CIFAR_RECORD,
            f"size {len(raw)} is not a positive multiple of the {CIFAR_RECORD}-byte record",
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0]
    bad = np.flatnonzero(labels >= 10)
    if bad.size:
        i = int(bad[0])
        raise ParseError(path, i * CIFAR_RECORD, f"label {labels[i]} outside [0, 10)")
    # pixels stay in stored order: 1024 red, 1024 green, 1024 blue
    return records[:, 1:].astype(np.float64), labels.astype(np.int64)


def load_cifar10_binary(train_batches: Sequence, test_batch, name="cifar10"):
    parts = [read_cifar10_batch(p) for p in train_batches]
    if not parts:
        raise InvalidArgumentError("at least one CIFAR-10 training batch is required")
    train_x = np.concatenate([p[0] for p in parts])
    train_y = np.concatenate([p[1] for p in parts])
    test_x, test_y = read_cifar10_batch(test_batch)
    return Dataset(name, train_x, train_y, test_x, test_y, 10)


def _read_text_matrix(path, width: int) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != width:
                raise ParseError(path, f"line {lineno}", f"{len(fields)} fields, expected {width}")
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise ParseError(path, f"line {lineno}", str(exc)) from None
    if not rows:
        raise ParseError(path, "line 1", "no data rows")
    x = np.array(rows)
    if not np.isfinite(x).all():
        lineno = int(np.flatnonzero(~np.isfinite(x).all(axis=1))[0]) + 1
        raise ParseError(path, f"row {lineno}", "non-finite feature value")
    return x


def _read_text_labels(path, num_classes: int) -> np.ndarray:
    labels = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                value = int(text)
            except ValueError:
                raise ParseError(path, f"line {lineno}", f"not an integer label: {text!r}") from None
            if not 1 <= value <= num_classes:
                raise ParseError(path, f"line {lineno}", f"label {value} outside 1..{num_classes}")
            labels.append(value - 1)
    return np.array(labels, dtype=np.int64)


def load_uci_har(train_features, train_labels, test_features, test_labels,
                 name="uci_har", feature_count=UCI_HAR_FEATURES):
    """UCI HAR from its whitespace text files; labels 1..6 become 0..5."""
    out = []
    for xp, yp in ((train_features, train_labels), (test_features, test_labels)):
        x = _read_text_matrix(xp, feature_count)
        y = _read_text_labels(yp, UCI_HAR_CLASSES)
        if len(x) != len(y):
            raise ParseError(yp, f"line {len(y)}", f"{len(y)} labels for {len(x)} feature rows in {xp}")
        out += [x, y]
    return Dataset(name, out[0], out[1], out[2], out[3], UCI_HAR_CLASSES)


def load_from_manifest(manifest_path, name: str) -> Dataset:
    """Load dataset ``name`` from a JSON manifest.

    Each entry names a ``format`` (``idx``, ``cifar10`` or ``uci_har``) and
    its file paths; relative paths resolve against the manifest's directory::

        {"uci_har": {"format": "uci_har",
                     "train_features": "UCI HAR Dataset/train/X_train.txt", ...}}
    """
    manifest_path = Path(manifest_path)
    entries = json.loads(manifest_path.read_text())
    if name not in entries:
        raise InvalidArgumentError(f"dataset {name!r} not listed in {manifest_path}")
    entry = dict(entries[name])
    root = manifest_path.parent

    def resolve(p):
        return root / p

    fmt = entry.get("format")
    try:
        if fmt == "idx":
            return load_mnist_idx(
                resolve(entry["train_images"]), resolve(entry["train_labels"]),
                resolve(entry["test_images"]), resolve(entry["test_labels"]), name=name,
            )
        if fmt == "cifar10":
            return load_cifar10_binary(
                [resolve(p) for p in entry["train_batches"]], resolve(entry["test_batch"]), name=name,
            )
        if fmt == "uci_har":
            return load_uci_har(
                resolve(entry["train_features"]), resolve(entry["train_labels"]),
                resolve(entry["test_features"]), resolve(entry["test_labels"]), name=name,
            )
    except KeyError as exc:
        raise InvalidArgumentError(f"manifest entry {name!r} lacks path {exc}") from None
    raise InvalidArgumentError(f"manifest entry {name!r} has unknown format {fmt!r}")


def subsample_train(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Keep a seeded random subset of ``n`` training rows, in original order."""
    if n >= dataset.num_train:
        return dataset
    rng = np.random.Generator(np.random.PCG64(seed))
    keep = np.sort(rng.choice(dataset.num_train, size=n, replace=False))
    return Dataset(
        dataset.name, dataset.train_x[keep], dataset.train_y[keep],
        dataset.test_x, dataset.test_y, dataset.num_classes,
    )


@dataclass(frozen=True)
class PartitionSpec:
    num_clients: int
    mode: str = "iid"
    seed: int = 0
    classes_per_client: int = 2


@dataclass(frozen=True, eq=False)
class ClientShard:
    client_id: int
    indices: np.ndarray


def _assign_class_slots(rng, num_clients, k, num_classes):
    # every class gets floor or ceil of N*k/C slots; which classes get the
    # extra slot is random
    capacity = np.bincount(np.arange(num_clients * k) % num_classes, minlength=num_classes)
    capacity = capacity[rng.permutation(num_classes)]
    held = np.empty((num_clients, k), dtype=np.int64)
    for c in range(num_clients):
        # classes with the most slots left first, random among ties; this
        # greedy order never strands a slot while capacity <= clients left
        order = np.lexsort((rng.random(num_classes), -capacity))
        held[c] = np.sort(order[:k])
        capacity[held[c]] -= 1
    return held


def partition(dataset: Dataset, spec: PartitionSpec) -> List[ClientShard]:
    """Split the training rows across ``spec.num_clients`` participants.

    ``iid``: seeded shuffle, then round-robin.  ``non-iid``: every client
    holds ``classes_per_client`` distinct classes, every class is held by
    as nearly the same number of clients as possible, and each class's rows
    are split evenly among the clients holding it.
    """
    N = spec.num_clients
    C = dataset.num_classes
    n = dataset.num_train
    if N < 1:
        raise InvalidArgumentError(f"need at least one client, got {N}")
    if spec.mode not in ("iid", "non-iid"):
        raise InvalidArgumentError(f"unknown partition mode {spec.mode!r}")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if N == 1:
        shards = [ClientShard(0, rng.permutation(n))]
    elif spec.mode == "iid":
        order = rng.permutation(n)
        shards = [ClientShard(c, order[c::N]) for c in range(N)]
    else:
        k = spec.classes_per_client
        if not 1 <= k <= C:
            raise InvalidArgumentError(f"classes_per_client={k} not in [1, {C}]")
        if N * k < C:
            raise InvalidArgumentError(
                f"{N} clients x {k} classes cannot cover all {C} classes"
            )
        held = _assign_class_slots(rng, N, k, C)
        parts = [[] for _ in range(N)]
        for cls in range(C):
            rows = rng.permutation(np.flatnonzero(dataset.train_y == cls))
            owners = [c for c in range(N) if cls in held[c]]
            for owner, chunk in zip(owners, np.array_split(rows, len(owners))):
                parts[owner].append(chunk)
        shards = []
        for c in range(N):
            idx = np.concatenate(parts[c]) if parts[c] else np.zeros(0, dtype=np.int64)
            shards.append(ClientShard(c, rng.permutation(idx)))
    for shard in shards:
        if shard.indices.size == 0:
            raise InvalidArgumentError(
                f"client {shard.client_id} received no training rows; use fewer clients"
            )
    return shards


def shard_classes(dataset: Dataset, shard: ClientShard) -> np.ndarray:
    return np.unique(dataset.train_y[shard.indices])
