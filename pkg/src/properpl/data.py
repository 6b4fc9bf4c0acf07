"""Dataset ingestion, synthetic Gaussian scenarios and partial-label corruption."""
from __future__ import annotations

import gzip
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .core import Dataset, LabelSpace
from .errors import BadMagic, CountMismatch, FormatError, MissingLabels, TruncatedFile, UsageError
from .genmodels import GenerationModel, sample_candidate_sets

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _open(path):
    path = os.fspath(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def _read_exact(f, size, path, what):
    buf = f.read(size)
    if len(buf) != size:
        raise TruncatedFile(f"{path}: expected {size} bytes of {what}, got {len(buf)}")
    return buf


def read_idx_images(path) -> np.ndarray:
    """(count, rows, cols) uint8 array from an IDX image file."""
    with _open(path) as f:
        magic, = struct.unpack(">I", _read_exact(f, 4, path, "magic"))
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
        count, rows, cols = struct.unpack(">III", _read_exact(f, 12, path, "dimensions"))
        pixels = _read_exact(f, count * rows * cols, path, "pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with _open(path) as f:
        magic, = struct.unpack(">I", _read_exact(f, 4, path, "magic"))
        if magic != IDX_LABELS_MAGIC:
            raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
        count, = struct.unpack(">I", _read_exact(f, 4, path, "count"))
        labels = _read_exact(f, count, path, "labels")
    return np.frombuffer(labels, dtype=np.uint8)


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        f.write(images.tobytes(order="C"))


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_idx_dataset(images_path, labels_path, num_classes: int = 10) -> Dataset:
    images = read_idx_images(images_path)
    raw = read_idx_labels(labels_path)
    if images.shape[0] != raw.shape[0]:
        raise CountMismatch(f"{images_path} holds {images.shape[0]} images but "
                            f"{labels_path} holds {raw.shape[0]} labels")
    if raw.size and raw.max() >= num_classes:
        raise FormatError(f"{labels_path}: label {raw.max()} outside 0..{num_classes - 1}")
    n = images.shape[0]
    features = images.reshape(n, -1).astype(np.float64) / 255.0
    provenance = {"source": {"format": "idx", "images": os.path.basename(os.fspath(images_path)),
                             "labels": os.path.basename(os.fspath(labels_path)),
                             "pixel_scale": 255}}
    return Dataset.fully_labeled(features, raw.astype(np.int64) + 1, LabelSpace(num_classes),
                                 provenance)


# CSV export of fully labelled data: a "K,d,n" line, their values, then y,x_1..x_d rows

def write_labeled_csv(path, dataset: Dataset) -> None:
    if dataset.labels is None:
        raise MissingLabels("CSV export needs true labels")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("K,d,n\n")
        f.write(f"{dataset.K},{dataset.dim},{dataset.n}\n")
        for y, x in zip(dataset.labels, dataset.features):
            f.write(",".join([str(int(y))] + [repr(float(v)) for v in x]) + "\n")


def read_labeled_csv(path) -> Dataset:
    with open(path, encoding="utf-8") as f:
        if f.readline().strip().replace(" ", "") != "K,d,n":
            raise FormatError(f"{path}:1: expected header 'K,d,n'")
        try:
            K, d, n = (int(v) for v in f.readline().split(","))
        except ValueError:
            raise FormatError(f"{path}:2: expected three integers") from None
        rows = [line for line in f if line.strip()]
    if len(rows) != n:
        raise CountMismatch(f"{path}: header declares n={n} but found {len(rows)} rows")
    table = np.array([[float(v) for v in r.split(",")] for r in rows]).reshape(n, d + 1)
    provenance = {"source": {"format": "csv", "path": os.path.basename(os.fspath(path))}}
    return Dataset.fully_labeled(table[:, 1:], table[:, 0].astype(np.int64), LabelSpace(K),
                                 provenance)


@dataclass(frozen=True)
class SyntheticScenario:
    """Isotropic Gaussian classes with a shared variance and a closed-form posterior."""

    priors: tuple
    means: tuple
    variance: float

    def __post_init__(self):
        if abs(math.fsum(self.priors) - 1) > 1e-12 or min(self.priors) < 0:
            raise UsageError("priors must be a probability vector")
        if not self.variance > 0:
            raise UsageError("variance must be positive")
        if len(self.means) != len(self.priors):
            raise UsageError("one mean per class is required")
        LabelSpace(len(self.priors))

    @property
    def K(self) -> int:
        return len(self.priors)

    @property
    def d(self) -> int:
        return len(self.means[0])

    def log_joint(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mu = np.asarray(self.means)
        sq = ((x[:, None, :] - mu[None, :, :]) ** 2).sum(axis=2)
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.priors))[None, :] - sq / (2 * self.variance)

    def posterior(self, x) -> np.ndarray:
        """p(y | x) for each row of x, shape (n, K)."""
        lj = self.log_joint(x)
        lj -= lj.max(axis=1, keepdims=True)
        p = np.exp(lj)
        return p / p.sum(axis=1, keepdims=True)

    def bayes_predict(self, x) -> np.ndarray:
        return np.argmax(self.log_joint(x), axis=1) + 1

    def describe(self) -> dict:
        return {"priors": list(self.priors), "means": [list(m) for m in self.means],
                "variance": self.variance}


def gaussian_scenario(K: int = 3, d: int = 5, separation: float = 2.0,
                      variance: float = 1.0, priors=None) -> SyntheticScenario:
    """Class k centred at ``separation`` times the k-th unit vector (needs d >= K)."""
    if d < K:
        raise UsageError(f"need d >= K to place class means on axes (d={d}, K={K})")
    means = tuple(tuple(separation if j == k else 0.0 for j in range(d)) for k in range(K))
    priors = tuple(priors) if priors is not None else (1.0 / K,) * K
    return SyntheticScenario(priors, means, variance)


def make_synthetic(scenario: SyntheticScenario, n: int, seed):
    """Draw n labelled examples; returns (dataset, posterior function)."""
    if n < 1:
        raise UsageError("n must be at least 1")
    rng = np.random.default_rng(seed)
    y = rng.choice(scenario.K, size=n, p=np.asarray(scenario.priors)) + 1
    mu = np.asarray(scenario.means)
    x = mu[y - 1] + math.sqrt(scenario.variance) * rng.standard_normal((n, scenario.d))
    provenance = {"source": {"format": "synthetic", "scenario": scenario.describe(),
                             "n": n, "seed": seed}}
    return Dataset.fully_labeled(x, y, LabelSpace(scenario.K), provenance), scenario.posterior


def corrupt(dataset: Dataset, model: GenerationModel, seed) -> Dataset:
    """Replace every candidate set by a draw from ``model`` given the true label."""
    if dataset.labels is None:
        raise MissingLabels("corruption needs true labels")
    if model.K != dataset.K:
        raise UsageError(f"model has K={model.K} but dataset has K={dataset.K}")
    rng = np.random.default_rng(seed)
    masks = sample_candidate_sets(model, dataset.labels, rng, dataset.features)
    provenance = dict(dataset.provenance)
    if model.kind == "custom":
        provenance["generation_model"] = {"kind": "custom", "K": model.K, "name": model.name,
                                          "seed": seed}
    else:
        provenance["generation_model"] = model.descriptor(seed=seed)
    return dataset.with_masks(masks, provenance)


def split_validation(dataset: Dataset, fraction: float = 0.1, seed=0):
    """Random (train, validation) split; validation gets floor(n * fraction) examples."""
    if not 0 < fraction < 1:
        raise UsageError("fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n)
    n_val = int(math.floor(dataset.n * fraction))
    return dataset.subset(np.sort(perm[n_val:])), dataset.subset(np.sort(perm[:n_val]))
