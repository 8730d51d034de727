"""Desk-scale datasets for the federated simulation.

Data reaches the trainer through files: image/label pairs in the standard IDX
format (the MNIST container format), or synthetic feature CSVs.  The bundled
"digits" source (scikit-learn's 8x8 handwritten digits) is materialized into
IDX files first, so the same loader path serves bundled data and any
user-provided MNIST-style subset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeds

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


@dataclass(frozen=True)
class DeskData:
    """Train/test split with features scaled to [0, 1]."""

    X_train: np.ndarray  # (n_train, D)
    y_train: np.ndarray  # (n_train,) int labels
    X_test: np.ndarray
    y_test: np.ndarray
    name: str

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    @property
    def n_classes(self) -> int:
        return int(max(self.y_train.max(), self.y_test.max())) + 1


def save_idx_images(path, images: np.ndarray) -> None:
    """(n, rows, cols) uint8 array -> IDX3 file."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, n, rows, cols))
        fh.write(images.tobytes())


def save_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_MAGIC_LABELS, labels.shape[0]))
        fh.write(labels.tobytes())


def load_idx(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = struct.unpack(">I", fh.read(4))[0]
        if magic == IDX_MAGIC_IMAGES:
            n, rows, cols = struct.unpack(">III", fh.read(12))
            data = np.frombuffer(fh.read(n * rows * cols), dtype=np.uint8)
            return data.reshape(n, rows, cols)
        if magic == IDX_MAGIC_LABELS:
            n = struct.unpack(">I", fh.read(4))[0]
            return np.frombuffer(fh.read(n), dtype=np.uint8).copy()
    raise ValueError(f"unrecognized IDX magic 0x{magic:08x} in {path}")


def load_idx_dataset(train_images, train_labels, test_images, test_labels,
                     name: str = "idx") -> DeskData:
    """Read an IDX image/label quadruple and scale pixels to [0, 1].

    Both splits use the training split's scale so features stay comparable.
    """
    def flat(path):
        imgs = load_idx(path)
        return imgs.reshape(imgs.shape[0], -1).astype(float)

    X_train = flat(train_images)
    scale = float(max(X_train.max(), 1.0))
    return DeskData(
        X_train=X_train / scale,
        y_train=load_idx(train_labels).astype(np.int64),
        X_test=flat(test_images) / scale,
        y_test=load_idx(test_labels).astype(np.int64),
        name=name,
    )


def materialize_digits(out_dir, train_size: int = 1200, test_size: int = 597,
                       seed: int = 0) -> dict[str, Path]:
    """Write the bundled 8x8 digits as IDX files; returns the four paths.

    The split is a seed-deterministic permutation of the 1797 samples.
    """
    from sklearn.datasets import load_digits  # local import: only used here

    raw = load_digits()
    n_total = raw.data.shape[0]
    if train_size + test_size > n_total:
        raise ValueError(
            f"requested {train_size}+{test_size} samples, only {n_total} available")
    order = seeds.substream(seed, seeds.DATA).permutation(n_total)
    images = raw.images.astype(np.uint8)  # pixel values 0..16
    labels = raw.target.astype(np.uint8)
    tr, te = order[:train_size], order[train_size:train_size + test_size]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "train_images": out_dir / "train-images-idx3-ubyte",
        "train_labels": out_dir / "train-labels-idx1-ubyte",
        "test_images": out_dir / "test-images-idx3-ubyte",
        "test_labels": out_dir / "test-labels-idx1-ubyte",
    }
    save_idx_images(paths["train_images"], images[tr])
    save_idx_labels(paths["train_labels"], labels[tr])
    save_idx_images(paths["test_images"], images[te])
    save_idx_labels(paths["test_labels"], labels[te])
    return paths


def synthetic_mixture(n_train: int, n_test: int, n_features: int = 16,
                      n_classes: int = 10, seed: int = 0,
                      spread: float = 1.2) -> DeskData:
    """Gaussian-mixture classification data; one isotropic blob per class."""
    rng = seeds.substream(seed, seeds.DATA)
    centers = rng.normal(scale=spread, size=(n_classes, n_features))
    n = n_train + n_test
    y = rng.integers(0, n_classes, size=n)
    X = centers[y] + rng.normal(scale=0.8, size=(n, n_features))
    X = (X - X.min()) / (X.max() - X.min())
    return DeskData(
        X_train=X[:n_train], y_train=y[:n_train].astype(np.int64),
        X_test=X[n_train:], y_test=y[n_train:].astype(np.int64),
        name="synthetic",
    )


def save_synthetic_csv(path, data: DeskData) -> None:
    """Persist a synthetic split as CSV rows (split, label, features...)."""
    with open(path, "w") as fh:
        cols = ",".join(f"x{j}" for j in range(data.n_features))
        fh.write(f"split,label,{cols}\n")
        for split, X, y in (("train", data.X_train, data.y_train),
                            ("test", data.X_test, data.y_test)):
            for i in range(X.shape[0]):
                feats = ",".join(repr(float(v)) for v in X[i])
                fh.write(f"{split},{y[i]},{feats}\n")


def load_synthetic_csv(path) -> DeskData:
    splits, labels, feats = [], [], []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("split,label"):
            raise ValueError(f"unexpected synthetic CSV header: {header!r}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            splits.append(parts[0])
            labels.append(int(parts[1]))
            feats.append([float(v) for v in parts[2:]])
    splits = np.array(splits)
    X = np.array(feats)
    y = np.array(labels, dtype=np.int64)
    tr = splits == "train"
    return DeskData(X_train=X[tr], y_train=y[tr], X_test=X[~tr], y_test=y[~tr],
                    name="synthetic")


def materialize(spec: dict, workdir, seed: int = 0) -> DeskData:
    """Resolve a dataset spec into loaded data, creating files as needed.

    Specs:
      {"name": "digits", "train_size": .., "test_size": ..}
      {"name": "synthetic", "train_size": .., "test_size": .., "n_features": ..}
      {"name": "idx", "train_images": path, "train_labels": path,
                       "test_images": path, "test_labels": path}
    """
    name = spec.get("name", "digits")
    if name == "digits":
        paths = materialize_digits(
            Path(workdir) / "digits_idx",
            train_size=spec.get("train_size", 1200),
            test_size=spec.get("test_size", 597),
            seed=seed,
        )
        return load_idx_dataset(paths["train_images"], paths["train_labels"],
                                paths["test_images"], paths["test_labels"],
                                name="digits")
    if name == "synthetic":
        data = synthetic_mixture(
            n_train=spec.get("train_size", 1200),
            n_test=spec.get("test_size", 600),
            n_features=spec.get("n_features", 16),
            n_classes=spec.get("n_classes", 10),
            seed=seed,
        )
        save_synthetic_csv(Path(workdir) / "synthetic.csv", data)
        return data
    if name == "idx":
        return load_idx_dataset(spec["train_images"], spec["train_labels"],
                                spec["test_images"], spec["test_labels"])
    raise ValueError(f"unknown dataset {name!r}")
