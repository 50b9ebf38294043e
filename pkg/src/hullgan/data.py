"""Dataset construction and ingestion.

Synthetic cluster/ring generators, the big-endian IDX image format, seeded
subsampling to a target class ratio, nearest-neighbour synthetic
oversampling, and CSV import/export. Datasets are frozen after construction
(read-only arrays) and every constructor is pure given its seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    name: str
    num_classes: int
    feature_space: str = "raw"  # raw | extracted
    synthetic: np.ndarray | None = None  # (n,) bool, True for generated rows
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.synthetic is None:
            self.synthetic = np.zeros(len(self.labels), dtype=bool)
        self.synthetic = np.ascontiguousarray(self.synthetic, dtype=bool)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be (n, d) with one label per row")
        if np.any(~np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        for arr in (self.features, self.labels, self.synthetic):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class ClassPriors:
    priors: np.ndarray  # (K,), sums to 1
    ascending_order: np.ndarray  # class ids sorted by non-decreasing prior

    @property
    def majority(self) -> int:
        return int(self.ascending_order[-1])


def class_priors(ds: Dataset) -> ClassPriors:
    if ds.n < 1:
        raise ValueError("dataset is empty")
    counts = ds.class_counts()
    priors = counts / ds.n
    order = np.argsort(priors, kind="stable")
    return ClassPriors(priors, order.astype(np.int64))


def make_blobs(
    n_per_class: list[int],
    centers: list[tuple[float, ...]],
    stddev: float,
    seed: int,
    name: str = "blobs",
) -> Dataset:
    """Isotropic Gaussian clusters, one per class, in class order."""
    if len(n_per_class) == 0:
        raise ValueError("need at least one class")
    if len(n_per_class) != len(centers):
        raise ValueError("one center per class required")
    if stddev <= 0:
        raise ValueError("stddev must be positive")
    ctr = np.asarray(centers, dtype=np.float64)
    if len(np.unique(ctr, axis=0)) != len(ctr):
        raise ValueError("centers must be distinct")
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for c, n in enumerate(n_per_class):
        feats.append(ctr[c] + stddev * rng.standard_normal((n, ctr.shape[1])))
        labels.append(np.full(n, c, dtype=np.int64))
    return Dataset(
        np.vstack(feats), np.concatenate(labels), name, len(n_per_class),
        metadata={"kind": "blobs", "seed": seed},
    )


def make_rings(
    n_per_class: list[int],
    radii: list[float],
    noise: float,
    seed: int,
    name: str = "rings",
) -> Dataset:
    """Concentric annuli; inner classes sit inside the hull of outer ones."""
    if len(n_per_class) == 0:
        raise ValueError("need at least one class")
    if len(n_per_class) != len(radii):
        raise ValueError("one radius per class required")
    radii = list(map(float, radii))
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for c, (n, r) in enumerate(zip(n_per_class, radii)):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        rr = r + noise * rng.standard_normal(n)
        feats.append(np.stack([rr * np.cos(theta), rr * np.sin(theta)], axis=1))
        labels.append(np.full(n, c, dtype=np.int64))
    meta = {"kind": "rings", "seed": seed}
    for a, b in zip(radii, radii[1:]):
        if a + 3.0 * noise >= b - 3.0 * noise:
            meta["warning"] = "adjacent rings overlap at 3 sigma noise"
            break
    return Dataset(np.vstack(feats), np.concatenate(labels), name, len(n_per_class), metadata=meta)


def _read_be32(buf: bytes, offset: int) -> int:
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path, labels_path, downscale: int = 1, name: str | None = None) -> Dataset:
    """Load an IDX image/label file pair, scaling pixels to [0, 1].

    ``downscale`` mean-pools by an integer factor that must divide both image
    sides.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    img = images_path.read_bytes()
    lab = labels_path.read_bytes()
    if len(img) < 16:
        raise ValueError(f"{images_path}: too short for an IDX image header")
    magic = _read_be32(img, 0)
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(
            f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    n, rows, cols = (_read_be32(img, o) for o in (4, 8, 12))
    expected = n * rows * cols
    if len(img) - 16 != expected:
        raise ValueError(
            f"{images_path}: truncated data, expected {expected} bytes, got {len(img) - 16}"
        )
    lmagic = _read_be32(lab, 0)
    if lmagic != IDX_LABEL_MAGIC:
        raise ValueError(
            f"{labels_path}: bad magic 0x{lmagic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    n_lab = _read_be32(lab, 4)
    if len(lab) - 8 != n_lab:
        raise ValueError(
            f"{labels_path}: truncated data, expected {n_lab} bytes, got {len(lab) - 8}"
        )
    if n != n_lab:
        raise ValueError(f"image count {n} does not match label count {n_lab}")

    pixels = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(n, rows, cols)
    labels = np.frombuffer(lab, dtype=np.uint8, offset=8).astype(np.int64)
    if downscale > 1:
        if rows % downscale or cols % downscale:
            raise ValueError(f"downscale {downscale} must divide image sides {rows}x{cols}")
        r2, c2 = rows // downscale, cols // downscale
        pixels = pixels.reshape(n, r2, downscale, c2, downscale).mean(axis=(2, 4))
        rows, cols = r2, c2
    feats = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    k = int(labels.max()) + 1 if n else 0
    return Dataset(
        feats, labels, name or images_path.stem, k,
        metadata={"kind": "idx", "rows": rows, "cols": cols, "downscale": downscale},
    )


def save_idx(ds: Dataset, images_path, labels_path, rows: int | None = None, cols: int | None = None) -> None:
    """Write the dataset back out as an IDX pair (inverse of ``load_idx``)."""
    rows = rows or ds.metadata.get("rows")
    cols = cols or ds.metadata.get("cols")
    if rows is None or cols is None or rows * cols != ds.dim:
        raise ValueError("rows x cols must match the feature width")
    pixels = np.clip(np.round(ds.features * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, ds.n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, ds.n))
        f.write(ds.labels.astype(np.uint8).tobytes())


def apply_imbalance(ds: Dataset, target_counts: list[int], seed: int) -> Dataset:
    """Subsample without replacement to exact per-class counts (seeded
    shuffle, prefix take; original row order otherwise preserved)."""
    if len(target_counts) != ds.num_classes:
        raise ValueError("need one target count per class")
    rng = np.random.default_rng(seed)
    keep = []
    for c, target in enumerate(target_counts):
        idx = np.flatnonzero(ds.labels == c)
        if target > len(idx):
            raise ValueError(
                f"class {c}: requested {target} samples but only {len(idx)} available"
            )
        keep.append(rng.permutation(idx)[:target])
    keep = np.sort(np.concatenate(keep))
    meta = dict(ds.metadata)
    meta["imbalance_counts"] = list(map(int, target_counts))
    return Dataset(
        ds.features[keep], ds.labels[keep], ds.name, ds.num_classes,
        feature_space=ds.feature_space, synthetic=ds.synthetic[keep], metadata=meta,
    )


def _append_rows(ds: Dataset, new_feats: list[np.ndarray], new_labels: list[int], meta: dict) -> Dataset:
    if not new_feats:
        return Dataset(
            ds.features, ds.labels, ds.name, ds.num_classes,
            feature_space=ds.feature_space, synthetic=ds.synthetic, metadata=meta,
        )
    add = np.vstack(new_feats)
    feats = np.vstack([ds.features, add])
    labels = np.concatenate([ds.labels, np.asarray(new_labels, dtype=np.int64)])
    synth = np.concatenate([ds.synthetic, np.ones(len(add), dtype=bool)])
    return Dataset(
        feats, labels, ds.name, ds.num_classes,
        feature_space=ds.feature_space, synthetic=synth, metadata=meta,
    )


def smote_oversample(ds: Dataset, k: int, target_counts: list[int], seed: int) -> Dataset:
    """Nearest-neighbour interpolation oversampling.

    Synthetic points are x + u (x_nn - x) with u ~ U(0,1) between same-class
    neighbours. A single-sample class falls back to duplication with Gaussian
    jitter (sigma = 1% of the per-dimension feature range) and is flagged in
    the metadata.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(target_counts) != ds.num_classes:
        raise ValueError("need one target count per class")
    rng = np.random.default_rng(seed)
    feat_range = ds.features.max(axis=0) - ds.features.min(axis=0)
    meta = dict(ds.metadata)
    fallback: list[int] = []
    new_feats: list[np.ndarray] = []
    new_labels: list[int] = []
    for c, target in enumerate(target_counts):
        idx = np.flatnonzero(ds.labels == c)
        if len(idx) == 0:
            raise ValueError(f"class {c} has no samples")
        if target < len(idx):
            raise ValueError(f"class {c}: target {target} below current count {len(idx)}")
        need = target - len(idx)
        if need == 0:
            continue
        pts = ds.features[idx]
        if len(idx) == 1:
            fallback.append(c)
            jitter = 0.01 * feat_range
            for _ in range(need):
                new_feats.append(pts[0] + rng.standard_normal(ds.dim) * jitter)
                new_labels.append(c)
            continue
        k_eff = min(k, len(idx) - 1)
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        neighbours = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]
        for _ in range(need):
            base = rng.integers(len(idx))
            nb = neighbours[base][rng.integers(k_eff)]
            u = rng.uniform()
            new_feats.append(pts[base] + u * (pts[nb] - pts[base]))
            new_labels.append(c)
    if fallback:
        meta["smote_fallback_classes"] = fallback
    return _append_rows(ds, new_feats, new_labels, meta)


def random_oversample(ds: Dataset, target_counts: list[int], seed: int) -> Dataset:
    """Plain duplication oversampling (baseline for the synthetic methods)."""
    if len(target_counts) != ds.num_classes:
        raise ValueError("need one target count per class")
    rng = np.random.default_rng(seed)
    new_feats: list[np.ndarray] = []
    new_labels: list[int] = []
    for c, target in enumerate(target_counts):
        idx = np.flatnonzero(ds.labels == c)
        if len(idx) == 0:
            raise ValueError(f"class {c} has no samples")
        if target < len(idx):
            raise ValueError(f"class {c}: target {target} below current count {len(idx)}")
        for _ in range(target - len(idx)):
            new_feats.append(ds.features[rng.choice(idx)])
            new_labels.append(c)
    return _append_rows(ds, new_feats, new_labels, dict(ds.metadata))


def split_dataset(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded stratified split; every class keeps at least one training row."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        n_test = min(int(round(len(idx) * test_fraction)), max(len(idx) - 1, 0))
        test_idx.append(rng.permutation(idx)[:n_test])
    test_mask = np.zeros(ds.n, dtype=bool)
    test_mask[np.concatenate(test_idx)] = True

    def subset(mask, tag):
        return Dataset(
            ds.features[mask], ds.labels[mask], f"{ds.name}:{tag}", ds.num_classes,
            feature_space=ds.feature_space, synthetic=ds.synthetic[mask],
            metadata=dict(ds.metadata),
        )

    return subset(~test_mask, "train"), subset(test_mask, "test")


def save_csv(ds: Dataset, path) -> None:
    """Canonical CSV form: header f0..f{d-1},label, 17-significant-digit floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join([f"f{i}" for i in range(ds.dim)] + ["label"]) + "\n")
        for row, label in zip(ds.features, ds.labels):
            f.write(",".join(format(v, ".17g") for v in row) + f",{label}\n")


def load_csv(path, name: str | None = None, num_classes: int | None = None) -> Dataset:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        if header[-1] != "label" or not all(h == f"f{i}" for i, h in enumerate(header[:-1])):
            raise ValueError(f"{path}: unexpected CSV header")
        feats, labels = [], []
        for line in f:
            parts = line.strip().split(",")
            feats.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
    feats = np.asarray(feats, dtype=np.float64).reshape(len(labels), len(header) - 1)
    labels = np.asarray(labels, dtype=np.int64)
    k = num_classes or (int(labels.max()) + 1 if len(labels) else 0)
    return Dataset(feats, labels, name or path.stem, k)
