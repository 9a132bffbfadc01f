"""Model and dataset ingestion, slot layouts, and synthetic generators.

File formats (all diffable and hand-writable):

* Ensemble JSON: ``{classes, trees_per_class, features, scale_bits,
  trees: [{feat: [3 ints], thresh: [3 of +-0.5], leaves: [4 reals]}, ...]}``
  in class-major order.  Loading normalizes: thresholds become split codes,
  leaves are quantized at 2^scale_bits, and each class is padded with
  zero-leaf trees to a power-of-two count.
* SVM JSON: ``{classes, features, scale_bits, weights (row-major), bias}``.
* Dataset CSV: headerless integers in -2..2, one sample per row, optional
  final label column selected by flag.
* Layout JSON: the public slot map telling clients which feature, in which
  one-hot bit plane, feeds each slot of each ciphertext block.  Publishing
  it reveals which feature indices the model consults (the evaluation
  protocol leaks the same); no feature *values* are revealed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .compare import encode_split
from .errors import ModelFormatError
from .svm import SvmModel, check_aggregate_bound, quantize_model
from .trees import Depth2Tree, Ensemble, transform_leaves

STREAMS = ("root", "left", "right")


def _next_pow2(x: int) -> int:
    return 1 << max(0, x - 1).bit_length() if x > 1 else 1


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Raw copy-number samples in -2..2 with optional class labels."""

    samples: np.ndarray  # (n, d) int64
    labels: np.ndarray | None = None  # (n,) int64

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise ModelFormatError("dataset must be a 2-d sample matrix")
        if self.samples.size and (self.samples.min() < -2 or self.samples.max() > 2):
            raise ModelFormatError("dataset values must lie in -2..2")
        if self.labels is not None:
            if self.labels.shape != (self.samples.shape[0],):
                raise ModelFormatError("label vector must match the sample count")
            if self.labels.size and self.labels.min() < 0:
                raise ModelFormatError("labels must be non-negative class indices")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_features(self) -> int:
        return self.samples.shape[1]


def normalize_samples(samples: np.ndarray) -> np.ndarray:
    """Vectorized copy-number normalization: sign() collapses -2..2 to ternary."""
    arr = np.asarray(samples, dtype=np.int64)
    if arr.size and (arr.min() < -2 or arr.max() > 2):
        raise ModelFormatError("copy-number states must lie in -2..2")
    return np.sign(arr)


def save_dataset(ds: Dataset, path, include_labels: bool = True) -> None:
    cols = ds.samples
    if include_labels:
        if ds.labels is None:
            raise ModelFormatError("dataset has no labels to write")
        cols = np.hstack([ds.samples, ds.labels[:, None]])
    np.savetxt(path, cols, fmt="%d", delimiter=",")


def load_dataset(path, labeled: bool = False) -> Dataset:
    try:
        raw = np.loadtxt(path, dtype=np.int64, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ModelFormatError(f"malformed dataset CSV: {exc}") from exc
    if labeled:
        if raw.shape[1] < 2:
            raise ModelFormatError("labeled dataset needs at least two columns")
        return Dataset(raw[:, :-1], raw[:, -1])
    return Dataset(raw, None)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------


def _read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot parse {path}: {exc}") from exc


def load_ensemble(path, plaintext_modulus: int | None = None) -> Ensemble:
    """Load and normalize a tree-ensemble model file.

    Normalization quantizes leaves, encodes thresholds, and pads each class
    to a power-of-two tree count with zero-leaf trees.  With a plaintext
    modulus given, rejects models whose class sums could wrap.
    """
    doc = _read_json(path)
    try:
        classes = int(doc["classes"])
        k_raw = int(doc["trees_per_class"])
        scale_bits = int(doc["scale_bits"])
        raw_trees = doc["trees"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"ensemble file missing field: {exc}") from exc
    if classes < 1 or k_raw < 1:
        raise ModelFormatError("ensemble needs positive class and tree counts")
    if len(raw_trees) != classes * k_raw:
        raise ModelFormatError(
            f"expected {classes * k_raw} trees, file holds {len(raw_trees)}"
        )

    scale = 1 << scale_bits
    k_padded = _next_pow2(k_raw)
    max_feature = -1
    trees: list[Depth2Tree] = []
    for c in range(classes):
        for j in range(k_raw):
            entry = raw_trees[c * k_raw + j]
            try:
                feats = tuple(int(f) for f in entry["feat"])
                thresh = tuple(float(v) for v in entry["thresh"])
                leaves = tuple(float(v) for v in entry["leaves"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ModelFormatError(f"malformed tree entry: {exc}") from exc
            splits = tuple(encode_split(v) for v in thresh)
            quantized = tuple(int(np.round(v * scale)) for v in leaves)
            max_feature = max(max_feature, *feats)
            trees.append(Depth2Tree(feats, splits, quantized))
        trees.extend(
            Depth2Tree((0, 0, 0), (0, 0, 0), (0, 0, 0, 0)) for _ in range(k_padded - k_raw)
        )

    num_features = int(doc.get("features", max_feature + 1))
    if num_features <= max_feature:
        raise ModelFormatError(
            f"feature count {num_features} below max used index {max_feature}"
        )
    ens = Ensemble(
        num_classes=classes,
        trees_per_class=k_padded,
        num_features=num_features,
        scale_bits=scale_bits,
        trees=tuple(trees),
    )
    if plaintext_modulus is not None:
        check_aggregate_bound(ens.worst_case_aggregate(), plaintext_modulus)
    return ens


def save_ensemble(ens: Ensemble, path) -> None:
    """Write the normalized ensemble; loading it back is a fixed point."""
    scale = float(ens.quant_scale)
    doc = {
        "classes": ens.num_classes,
        "trees_per_class": ens.trees_per_class,
        "features": ens.num_features,
        "scale_bits": ens.scale_bits,
        "trees": [
            {
                "feat": list(t.features),
                "thresh": [-0.5 if y else 0.5 for y in t.splits],
                "leaves": [c / scale for c in t.leaves],
            }
            for t in ens.trees
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_svm(path, plaintext_modulus: int | None = None) -> SvmModel:
    doc = _read_json(path)
    try:
        classes = int(doc["classes"])
        features = int(doc["features"])
        scale_bits = int(doc["scale_bits"])
        weights = np.asarray(doc["weights"], dtype=np.float64).reshape(classes, features)
        bias = np.asarray(doc["bias"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed SVM file: {exc}") from exc
    return quantize_model(weights, bias, scale_bits, plaintext_modulus)


def save_svm(model: SvmModel, path) -> None:
    scale = float(model.quant_scale)
    doc = {
        "classes": model.num_classes,
        "features": model.num_features,
        "scale_bits": model.scale_bits,
        "weights": (model.weights / scale).reshape(-1).tolist(),
        "bias": (model.bias / scale).tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


# ---------------------------------------------------------------------------
# slot layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureLayout:
    """Public slot map: which feature feeds which node-slot of which block."""

    slot_count: int
    num_classes: int
    trees_per_class: int
    num_features: int
    svm_features: int
    num_blocks: int
    trees_per_block: int
    entries: tuple  # (block, stream, slot, feature_index) per tree node

    def __post_init__(self):
        total = self.num_classes * self.trees_per_class
        if len(self.entries) != 3 * total:
            raise ModelFormatError(
                f"layout must place {3 * total} nodes, holds {len(self.entries)}"
            )
        seen = set()
        for block, stream, slot, feature in self.entries:
            if stream not in STREAMS:
                raise ModelFormatError(f"unknown stream {stream!r}")
            if not 0 <= slot < self.trees_per_block:
                raise ModelFormatError(f"slot {slot} out of block range")
            if feature >= self.num_features:
                raise ModelFormatError(f"feature index {feature} out of range")
            key = (block, stream, slot)
            if key in seen:
                raise ModelFormatError(f"duplicate slot assignment {key}")
            seen.add(key)

    def block_tree_count(self, block: int) -> int:
        total = self.num_classes * self.trees_per_class
        return min(self.trees_per_block, total - block * self.trees_per_block)

    def class_position(self, c: int) -> tuple[int, int]:
        """(block, slot) where class c's summed score lands."""
        flat = c * self.trees_per_class
        return flat // self.trees_per_block, flat % self.trees_per_block


def build_layout(ens: Ensemble, slot_count: int, svm_features: int | None = None) -> FeatureLayout:
    """Deterministic slot layout for an ensemble on a given slot capacity.

    Trees pack class-major; a block holds a multiple of trees_per_class so
    no class ever straddles blocks, spilling deterministically when
    s*k exceeds the slot count.
    """
    k = ens.trees_per_class
    total = ens.num_classes * k
    if k > slot_count:
        raise ModelFormatError(
            f"a class of {k} trees does not fit {slot_count} slots; "
            "splitting one class across ciphertexts is not supported"
        )
    # k is a power of two <= N, so class blocks always align with rotation
    # rows (k <= N/2 divides the row; k == N uses the full-width sum)
    trees_per_block = min(total, (slot_count // k) * k)
    num_blocks = (total + trees_per_block - 1) // trees_per_block
    entries = []
    for g, tree in enumerate(ens.trees):
        block, slot = divmod(g, trees_per_block)
        for stream, feature in zip(STREAMS, tree.features):
            entries.append((block, stream, slot, feature))
    return FeatureLayout(
        slot_count=slot_count,
        num_classes=ens.num_classes,
        trees_per_class=k,
        num_features=ens.num_features,
        svm_features=ens.num_features if svm_features is None else svm_features,
        num_blocks=num_blocks,
        trees_per_block=trees_per_block,
        entries=tuple(entries),
    )


def save_layout(layout: FeatureLayout, path) -> None:
    doc = {
        "slot_count": layout.slot_count,
        "classes": layout.num_classes,
        "trees_per_class": layout.trees_per_class,
        "features": layout.num_features,
        "svm_features": layout.svm_features,
        "blocks": layout.num_blocks,
        "trees_per_block": layout.trees_per_block,
        "entries": [list(e) for e in layout.entries],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_layout(path) -> FeatureLayout:
    doc = _read_json(path)
    try:
        return FeatureLayout(
            slot_count=int(doc["slot_count"]),
            num_classes=int(doc["classes"]),
            trees_per_class=int(doc["trees_per_class"]),
            num_features=int(doc["features"]),
            svm_features=int(doc["svm_features"]),
            num_blocks=int(doc["blocks"]),
            trees_per_block=int(doc["trees_per_block"]),
            entries=tuple((int(b), str(s), int(sl), int(f)) for b, s, sl, f in doc["entries"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed layout file: {exc}") from exc


# ---------------------------------------------------------------------------
# client packing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClientBundle:
    """Packed slot vectors for one sample: one-hot planes plus the SVM vector.

    ``xgb_planes[block][stream]`` is the (x0, x2) pair of int64 slot vectors;
    the x1 plane is never materialized (the comparison does not read it).
    """

    xgb_planes: tuple  # per block: {stream: (x0_vec, x2_vec)}
    svm_vector: np.ndarray


def pack_client_input(sample_raw, layout: FeatureLayout) -> ClientBundle:
    """Normalize a raw sample and scatter its one-hot planes per the layout."""
    sample = np.asarray(sample_raw, dtype=np.int64)
    if sample.ndim != 1:
        raise ModelFormatError("expected a single sample row")
    needed = max(layout.num_features, layout.svm_features)
    if sample.size < needed:
        raise ModelFormatError(
            f"sample has {sample.size} features, layout consults {needed}"
        )
    ternary = normalize_samples(sample)

    blocks = []
    for block in range(layout.num_blocks):
        blocks.append(
            {
                stream: (
                    np.zeros(layout.slot_count, dtype=np.int64),
                    np.zeros(layout.slot_count, dtype=np.int64),
                )
                for stream in STREAMS
            }
        )
    for block, stream, slot, feature in layout.entries:
        value = ternary[feature]
        x0, x2 = blocks[block][stream]
        x0[slot] = 1 if value == -1 else 0
        x2[slot] = 1 if value == 1 else 0

    svm_vec = np.zeros(layout.slot_count, dtype=np.int64)
    if layout.svm_features > layout.slot_count:
        raise ModelFormatError(
            f"SVM vector of {layout.svm_features} features exceeds {layout.slot_count} slots"
        )
    svm_vec[: layout.svm_features] = ternary[: layout.svm_features]
    return ClientBundle(tuple(blocks), svm_vec)


def ensemble_slot_streams(ens: Ensemble, layout: FeatureLayout) -> list[dict]:
    """Server-side model planes per block: split codes y and leaf streams l1..l4.

    Slots beyond the last tree keep zero leaves, so whatever comparison bits
    land there contribute nothing to class sums.
    """
    out = []
    k = layout.trees_per_block
    for block in range(layout.num_blocks):
        planes = {
            "y": {s: np.zeros(layout.slot_count, dtype=np.int64) for s in STREAMS},
            "l": [np.zeros(layout.slot_count, dtype=np.int64) for _ in range(4)],
        }
        for local in range(layout.block_tree_count(block)):
            tree = ens.trees[block * k + local]
            for stream, y in zip(STREAMS, tree.splits):
                planes["y"][stream][local] = y
            tl = transform_leaves(tree.leaves)
            for idx, val in enumerate((tl.l1, tl.l2, tl.l3, tl.l4)):
                planes["l"][idx][local] = val
        out.append(planes)
    return out


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------

_STATE_PROBS = (0.10, 0.15, 0.50, 0.15, 0.10)  # -2..2, mass concentrated at 0
_LABEL_NOISE = 0.10


def _tree_leaf_indices(feats, splits, ternary_matrix: np.ndarray) -> np.ndarray:
    """Routed leaf index of one tree for every row of a ternary sample matrix."""
    zs = []
    for f, y in zip(feats, splits):
        v = ternary_matrix[:, f]
        x0 = (v == -1).astype(np.int64)
        x2 = (v == 1).astype(np.int64)
        zs.append((1 - x0) * (x2 * (y - 1) - y) + 1)
    z1, z2, z3 = zs
    return np.where(z1 == 1, np.where(z2 == 1, 0, 1), np.where(z3 == 1, 2, 3))


def ensemble_scores_clear_batch(ens: Ensemble, ternary_matrix: np.ndarray) -> np.ndarray:
    """Fixed-point class sums for every sample row, shape (n, s)."""
    n = ternary_matrix.shape[0]
    scores = np.zeros((n, ens.num_classes), dtype=np.int64)
    for g, tree in enumerate(ens.trees):
        c = g // ens.trees_per_class
        idx = _tree_leaf_indices(tree.features, tree.splits, ternary_matrix)
        scores[:, c] += np.asarray(tree.leaves, dtype=np.int64)[idx]
    return scores


def gen_synthetic(seed: int, s: int, k: int, d: int, n_samples: int):
    """Deterministic synthetic ensemble, linear model, and labeled dataset.

    Each class owns a few marker features; half of its trees score a bonus
    when a marker is amplified, and samples are drawn with their true
    class's markers mostly amplified.  That separates true-class sums from
    the noise band across samples, so pooled one-vs-rest AUC is driven by
    the injected label noise rather than by cross-sample score drift.

    Labels are the float ensemble's own argmax predictions with 10% of them
    flipped to a random other class, so downstream accuracy sits near 0.9
    and micro-averaged AUC lands strictly below 1.  The linear model is the
    ensemble's per-feature linear skeleton (conditional-mean effects), kept
    correlated with the same labels.

    Returns:
        (Ensemble, SvmModel, Dataset) with the ensemble already normalized.
    """
    if min(s, k, d, n_samples) < 1:
        raise ModelFormatError("synthetic dimensions must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), s, k, d, n_samples]))
    scale_bits = 20
    scale = 1 << scale_bits
    marker_bonus = 0.8

    feats = rng.integers(0, d, size=(s * k, 3))
    splits = rng.integers(0, 2, size=(s * k, 3))  # y bits directly
    leaves = np.round(rng.normal(0.0, 0.25, size=(s * k, 4)), 6)

    # class markers: marker trees pay marker_bonus iff their marker feature
    # is amplified (root split +0.5 routes x=+1 to the right leaves)
    markers_per_class = max(1, min(4, d // (2 * s))) if d >= s else 0
    marker_features = {
        c: list(range(c * markers_per_class, (c + 1) * markers_per_class))
        for c in range(s)
    } if markers_per_class else {c: [] for c in range(s)}
    n_marker_trees = k // 2 if markers_per_class else 0
    for c in range(s):
        for j in range(n_marker_trees):
            g = c * k + j
            feats[g, 0] = rng.choice(marker_features[c])
            splits[g, 0] = 0  # threshold +0.5
            leaves[g] = (0.0, 0.0, marker_bonus, marker_bonus)

    samples = rng.choice(np.arange(-2, 3), size=(n_samples, d), p=_STATE_PROBS).astype(np.int64)
    if markers_per_class:
        true_class = rng.integers(0, s, n_samples)
        amplify = rng.random((n_samples, markers_per_class)) < 0.9
        for i in range(n_samples):
            cols = marker_features[int(true_class[i])]
            values = rng.choice([1, 2], size=markers_per_class)
            samples[i, cols] = np.where(amplify[i], values, samples[i, cols])
    ternary = np.sign(samples)

    # float class scores of the raw ensemble
    float_scores = np.zeros((n_samples, s))
    for g in range(s * k):
        c = g // k
        idx = _tree_leaf_indices(feats[g], splits[g], ternary)
        float_scores[:, c] += leaves[g][idx]

    labels = np.argmax(float_scores, axis=1).astype(np.int64)
    flip = rng.random(n_samples) < _LABEL_NOISE
    if s > 1:
        offsets = rng.integers(1, s, size=n_samples)
        labels[flip] = (labels[flip] + offsets[flip]) % s

    # per-feature linear skeleton of the ensemble: conditional-mean effects
    # under a uniform ternary input model
    weights = np.zeros((s, d))
    bias = np.zeros(s)
    ternary_values = (-1, 0, 1)
    for g in range(s * k):
        c = g // k
        f3 = tuple(int(f) for f in feats[g])
        y3 = tuple(int(y) for y in splits[g])
        c4 = leaves[g]
        distinct = sorted(set(f3))
        grids = np.array(
            np.meshgrid(*[ternary_values] * len(distinct), indexing="ij")
        ).reshape(len(distinct), -1)
        probes = np.zeros((grids.shape[1], d), dtype=np.int64)
        for fi, f in enumerate(distinct):
            probes[:, f] = grids[fi]
        scores = c4[_tree_leaf_indices(f3, y3, probes)]
        bias[c] += scores.mean()
        for fi, f in enumerate(distinct):
            hi = scores[grids[fi] == 1].mean()
            lo = scores[grids[fi] == -1].mean()
            weights[c, f] += (hi - lo) / 2.0

    k_padded = _next_pow2(k)
    trees = []
    for c in range(s):
        for j in range(k):
            g = c * k + j
            trees.append(
                Depth2Tree(
                    tuple(int(f) for f in feats[g]),
                    tuple(int(y) for y in splits[g]),
                    tuple(int(np.round(v * scale)) for v in leaves[g]),
                )
            )
        trees.extend(
            Depth2Tree((0, 0, 0), (0, 0, 0), (0, 0, 0, 0)) for _ in range(k_padded - k)
        )
    ens = Ensemble(s, k_padded, d, scale_bits, tuple(trees))
    model = quantize_model(weights, bias, scale_bits)
    return ens, model, Dataset(samples, labels)


def ensemble_agreement(ens: Ensemble, ds: Dataset) -> float:
    """Fraction of samples where the quantized ensemble's argmax matches labels."""
    if ds.labels is None:
        raise ModelFormatError("dataset carries no labels")
    scores = ensemble_scores_clear_batch(ens, normalize_samples(ds.samples))
    return float(np.mean(np.argmax(scores, axis=1) == ds.labels))
