"""Labels, candidate sets, datasets and small discrete distributions.

Classes are numbered 1..K at every public interface. Internally a candidate
set is a K-bit integer whose bit ``b - 1`` is set iff class ``b`` is a
candidate, so the decimal mask written to disk is the same integer.
"""
from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import (CapExceeded, EmptySet, FormatError, FullSet, OutOfRange,
                     TruncatedFile, UsageError)

MAX_CLASSES = 64
ENUMERATION_CAP = 20


@dataclass(frozen=True)
class LabelSpace:
    K: int

    def __post_init__(self):
        if not isinstance(self.K, (int, np.integer)) or isinstance(self.K, bool):
            raise UsageError(f"K must be an integer, got {self.K!r}")
        if self.K < 3:
            raise UsageError(f"need K >= 3 classes, got K={self.K}")
        if self.K > MAX_CLASSES:
            raise UsageError(f"K={self.K} exceeds the {MAX_CLASSES}-class mask width")

    @property
    def full_mask(self) -> int:
        return (1 << self.K) - 1

    @property
    def classes(self) -> range:
        return range(1, self.K + 1)


@dataclass(frozen=True, order=True)
class CandidateSet:
    """A partial label: non-empty proper subset of the K classes."""

    mask: int
    K: int = field(compare=False)

    def __post_init__(self):
        if self.mask <= 0:
            raise EmptySet("candidate set must contain at least one class")
        full = (1 << self.K) - 1
        if self.mask & ~full:
            raise OutOfRange(f"mask {self.mask} has bits beyond K={self.K}")
        if self.mask == full:
            raise FullSet("the full label set is not a valid partial label")

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(b + 1 for b in range(self.K) if self.mask >> b & 1)

    def __len__(self) -> int:
        return popcount(self.mask)

    def __contains__(self, y) -> bool:
        return 1 <= y <= self.K and bool(self.mask >> (y - 1) & 1)

    def __iter__(self):
        return iter(self.members)

    def __repr__(self):
        return f"CandidateSet({set(self.members)}, K={self.K})"


def candidate_set_from_members(members: Sequence[int], space: LabelSpace) -> CandidateSet:
    members = list(members)
    if not members:
        raise EmptySet("no members given")
    mask = 0
    for y in members:
        if not 1 <= int(y) <= space.K:
            raise OutOfRange(f"class id {y} not in 1..{space.K}")
        mask |= 1 << (int(y) - 1)
    if mask == space.full_mask:
        raise FullSet(f"members cover all {space.K} classes")
    return CandidateSet(mask, space.K)


def complement(s: CandidateSet) -> CandidateSet:
    return CandidateSet(((1 << s.K) - 1) & ~s.mask, s.K)


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def enumerate_candidate_sets(space: LabelSpace, containing: int | None = None,
                             size: int | None = None,
                             cap: int = ENUMERATION_CAP) -> Iterator[CandidateSet]:
    """Yield every valid partial label once, ordered by size then lexicographically.

    With ``containing=y`` only the 2**(K-1) - 1 sets holding ``y`` are produced;
    ``size`` restricts to sets of exactly that cardinality.
    """
    K = space.K
    if K > cap:
        raise CapExceeded(f"enumerating 2^{K} sets exceeds the cap K <= {cap}")
    if containing is not None and not 1 <= containing <= K:
        raise OutOfRange(f"class id {containing} not in 1..{K}")
    sizes = range(1, K) if size is None else [size]
    for m in sizes:
        if not 1 <= m <= K - 1:
            continue
        for combo in itertools.combinations(range(1, K + 1), m):
            if containing is not None and containing not in combo:
                continue
            mask = 0
            for y in combo:
                mask |= 1 << (y - 1)
            yield CandidateSet(mask, K)


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    candidates: CandidateSet
    true_label: int | None = None

    def __post_init__(self):
        if self.true_label is not None and self.true_label not in self.candidates:
            raise UsageError(f"true label {self.true_label} not in {self.candidates}")


class Dataset:
    """Columnar partial-label dataset.

    ``features`` is (n, d) float64, ``masks`` is (n,) uint64 and ``labels`` is
    (n,) int64 with classes 1..K, or None once stripped.
    """

    def __init__(self, features, masks, labels, space: LabelSpace, provenance=None):
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise UsageError("features must be a 2-d array")
        masks = np.ascontiguousarray(masks, dtype=np.uint64)
        n = features.shape[0]
        if masks.shape != (n,):
            raise UsageError(f"expected {n} masks, got shape {masks.shape}")
        full = np.uint64(space.full_mask)
        if n and (np.any(masks == 0) or np.any(masks & ~full) or np.any(masks == full)):
            raise UsageError("every mask must be a non-empty proper subset of the classes")
        if labels is not None:
            labels = np.ascontiguousarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise UsageError(f"expected {n} labels, got shape {labels.shape}")
            if n and (labels.min() < 1 or labels.max() > space.K):
                raise OutOfRange(f"labels must lie in 1..{space.K}")
            bits = (masks >> (labels - 1).astype(np.uint64)) & np.uint64(1)
            if not np.all(bits == 1):
                bad = int(np.flatnonzero(bits != 1)[0])
                raise UsageError(f"example {bad}: true label outside its candidate set")
        for arr in (features, masks) + ((labels,) if labels is not None else ()):
            arr.setflags(write=False)
        self.features = features
        self.masks = masks
        self.labels = labels
        self.space = space
        self.provenance = dict(provenance or {})

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def K(self) -> int:
        return self.space.K

    def __len__(self):
        return self.n

    def __getitem__(self, i) -> Example:
        label = None if self.labels is None else int(self.labels[i])
        return Example(self.features[i], CandidateSet(int(self.masks[i]), self.K), label)

    @property
    def examples(self) -> list[Example]:
        return [self[i] for i in range(self.n)]

    def candidate_matrix(self) -> np.ndarray:
        """(n, K) boolean membership matrix."""
        return masks_to_matrix(self.masks, self.K)

    def set_sizes(self) -> np.ndarray:
        return self.candidate_matrix().sum(axis=1)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.features[index], self.masks[index], labels, self.space,
                       self.provenance)

    def with_masks(self, masks, provenance=None) -> "Dataset":
        return Dataset(self.features, masks, self.labels, self.space,
                       self.provenance if provenance is None else provenance)

    def strip_labels(self) -> "Dataset":
        return Dataset(self.features, self.masks, None, self.space, self.provenance)

    @classmethod
    def fully_labeled(cls, features, labels, space: LabelSpace, provenance=None):
        labels = np.asarray(labels, dtype=np.int64)
        masks = np.left_shift(np.uint64(1), (labels - 1).astype(np.uint64))
        return cls(features, masks, labels, space, provenance)


def masks_to_matrix(masks, K: int) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.uint64)
    shifts = np.arange(K, dtype=np.uint64)
    return ((masks[:, None] >> shifts[None, :]) & np.uint64(1)).astype(bool)


def matrix_to_masks(matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=bool)
    weights = np.left_shift(np.uint64(1), np.arange(matrix.shape[1], dtype=np.uint64))
    return (matrix.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)


@dataclass(frozen=True)
class DiscreteDistribution:
    support: tuple
    probabilities: tuple

    def __post_init__(self):
        if len(self.support) != len(self.probabilities):
            raise UsageError("support and probabilities differ in length")
        if any(p < 0 for p in self.probabilities):
            raise UsageError("negative probability")
        total = math.fsum(self.probabilities)
        if abs(total - 1.0) > 1e-12:
            raise UsageError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        return cls(tuple(p for p, _ in pairs), tuple(float(q) for _, q in pairs))

    def __getitem__(self, point) -> float:
        try:
            return self.probabilities[self.support.index(point)]
        except ValueError:
            return 0.0

    def items(self):
        return zip(self.support, self.probabilities)

    def mean(self) -> float:
        return math.fsum(float(x) * p for x, p in self.items())


# -- partial-label dataset file ---------------------------------------------
#
# line 1: JSON header {"format": "ppl-dataset", "K", "d", "n", "provenance",
#         "features": "inline" | "<sidecar .npy filename>"}
# then one record per line: index,mask,label[,x_1..x_d]
# mask is decimal with bit b-1 set iff class b is a candidate; label may be
# empty. Floats are written with repr() so the round trip is exact.

FORMAT_TAG = "ppl-dataset"


def write_dataset(path, dataset: Dataset, inline: bool = True) -> None:
    path = os.fspath(path)
    header = {"format": FORMAT_TAG, "K": dataset.K, "d": dataset.dim, "n": dataset.n,
              "provenance": dataset.provenance}
    if inline:
        header["features"] = "inline"
    else:
        sidecar = os.path.basename(path) + ".features.npy"
        header["features"] = sidecar
        np.save(os.path.join(os.path.dirname(path) or ".", sidecar),
                dataset.features.astype("<f8"), allow_pickle=False)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        labels = dataset.labels
        for i in range(dataset.n):
            label = "" if labels is None else str(int(labels[i]))
            row = [str(i), str(int(dataset.masks[i])), label]
            if inline:
                row.extend(repr(float(v)) for v in dataset.features[i])
            f.write(",".join(row) + "\n")


def read_dataset(path) -> Dataset:
    path = os.fspath(path)
    with open(path, encoding="utf-8") as f:
        first = f.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:1: header is not JSON ({exc})") from None
        if not isinstance(header, dict) or header.get("format") != FORMAT_TAG:
            raise FormatError(f"{path}:1: not a {FORMAT_TAG} file")
        try:
            K, d, n = int(header["K"]), int(header["d"]), int(header["n"])
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"{path}:1: header must carry integer K, d, n") from None
        inline = header.get("features", "inline") == "inline"
        masks = np.zeros(n, dtype=np.uint64)
        labels = np.zeros(n, dtype=np.int64)
        have_labels = None
        features = np.zeros((n, d)) if inline else None
        count = 0
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            width = 3 + (d if inline else 0)
            if len(parts) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(parts)}")
            try:
                i = int(parts[0])
                if i != count:
                    raise FormatError(f"{path}:{lineno}: record index {i}, expected {count}")
                masks[i] = int(parts[1])
                labelled = parts[2] != ""
                if have_labels is None:
                    have_labels = labelled
                elif have_labels != labelled:
                    raise FormatError(f"{path}:{lineno}: labels present on some records only")
                if labelled:
                    labels[i] = int(parts[2])
                if inline:
                    features[i] = [float(v) for v in parts[3:]]
            except (ValueError, OverflowError, IndexError) as exc:
                if isinstance(exc, FormatError):
                    raise
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            count += 1
            if count > n:
                raise FormatError(f"{path}:{lineno}: more than n={n} records")
    if count != n:
        raise TruncatedFile(f"{path}: header declares n={n} but found {count} records")
    if not inline:
        sidecar = os.path.join(os.path.dirname(path) or ".", header["features"])
        features = np.load(sidecar, allow_pickle=False).astype(np.float64)
        if features.shape != (n, d):
            raise FormatError(f"{sidecar}: shape {features.shape}, expected {(n, d)}")
    return Dataset(features, masks, labels if have_labels else None, LabelSpace(K),
                   header.get("provenance", {}))
