"""Model files, layouts, client packing, synthetic generation."""

import json

import numpy as np
import pytest

from hedgerow import ModelFormatError
from hedgerow.modelio import (
    Dataset,
    build_layout,
    ensemble_agreement,
    ensemble_scores_clear_batch,
    ensemble_slot_streams,
    gen_synthetic,
    load_dataset,
    load_ensemble,
    load_layout,
    load_svm,
    normalize_samples,
    pack_client_input,
    save_dataset,
    save_ensemble,
    save_layout,
    save_svm,
)
from hedgerow.compare import encode_feature
from hedgerow.trees import ensemble_scores_clear


def write_ensemble_json(path, classes, k, trees, scale_bits=20, features=None):
    doc = {
        "classes": classes,
        "trees_per_class": k,
        "scale_bits": scale_bits,
        "trees": trees,
    }
    if features is not None:
        doc["features"] = features
    path.write_text(json.dumps(doc), encoding="utf-8")


def tree_doc(feat, thresh, leaves):
    return {"feat": feat, "thresh": thresh, "leaves": leaves}


# ---------------------------------------------------------------------------
# ensemble files
# ---------------------------------------------------------------------------


def test_load_ensemble_normalizes_fig2_style_root(tmp_path):
    # a root comparing feature 25486 against -0.5 carries split code y=1
    path = tmp_path / "ens.json"
    write_ensemble_json(
        path, 1, 1,
        [tree_doc([25486, 3, 4], [-0.5, 0.5, 0.5], [0.1, -0.2, 0.3, -0.4])],
    )
    ens = load_ensemble(path)
    assert ens.trees[0].splits == (1, 0, 0)
    assert ens.trees[0].features[0] == 25486
    assert ens.trees[0].leaves[0] == round(0.1 * (1 << 20))


def test_load_ensemble_pads_to_power_of_two(tmp_path):
    path = tmp_path / "ens.json"
    trees = [tree_doc([0, 0, 0], [0.5, 0.5, 0.5], [0.0, 0.0, 0.0, 0.0]) for _ in range(100)]
    write_ensemble_json(path, 1, 100, trees)
    ens = load_ensemble(path)
    assert ens.trees_per_class == 128
    assert len(ens.trees) == 128
    assert all(t.leaves == (0, 0, 0, 0) for t in ens.trees[100:])


def test_load_ensemble_rejects_bad_threshold(tmp_path):
    path = tmp_path / "ens.json"
    write_ensemble_json(path, 1, 1, [tree_doc([0, 0, 0], [0.3, 0.5, 0.5], [0, 0, 0, 0])])
    with pytest.raises(ModelFormatError):
        load_ensemble(path)


def test_load_ensemble_rejects_malformed_json(tmp_path):
    path = tmp_path / "ens.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ModelFormatError):
        load_ensemble(path)


def test_load_ensemble_checks_aggregate_bound(tmp_path):
    path = tmp_path / "ens.json"
    write_ensemble_json(path, 1, 1, [tree_doc([0, 0, 0], [0.5, 0.5, 0.5], [2.0, 2.0, 2.0, 2.0])])
    with pytest.raises(ModelFormatError):
        load_ensemble(path, plaintext_modulus=2**21)
    load_ensemble(path, plaintext_modulus=2**40)


def test_ensemble_roundtrip_fixed_point(tmp_path, rng):
    ens, _, _ = gen_synthetic(seed=5, s=3, k=5, d=16, n_samples=2)
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_ensemble(ens, p1)
    again = load_ensemble(p1)
    assert again == ens
    save_ensemble(again, p2)
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# svm files
# ---------------------------------------------------------------------------


def test_svm_zero_weight_file(tmp_path):
    path = tmp_path / "svm.json"
    path.write_text(
        json.dumps(
            {"classes": 2, "features": 3, "scale_bits": 20,
             "weights": [0.0] * 6, "bias": [0.0, 0.0]}
        ),
        encoding="utf-8",
    )
    model = load_svm(path)
    assert not model.weights.any()
    assert not model.bias.any()


def test_svm_scale_honored(tmp_path):
    path = tmp_path / "svm.json"
    path.write_text(
        json.dumps(
            {"classes": 1, "features": 1, "scale_bits": 20, "weights": [0.5], "bias": [0.0]}
        ),
        encoding="utf-8",
    )
    assert load_svm(path).weights[0, 0] == 524288


def test_svm_roundtrip_fixed_point(tmp_path, rng):
    _, model, _ = gen_synthetic(seed=6, s=4, k=4, d=24, n_samples=2)
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_svm(model, p1)
    again = load_svm(p1)
    assert np.array_equal(again.weights, model.weights)
    assert np.array_equal(again.bias, model.bias)
    save_svm(again, p2)
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------


def _small_ensemble(s=1, k=2, d=8):
    ens, _, _ = gen_synthetic(seed=4, s=s, k=k, d=d, n_samples=1)
    return ens


def test_layout_two_trees_one_class():
    ens = _small_ensemble(s=1, k=2, d=8)
    layout = build_layout(ens, 64)
    roots = sorted(e for e in layout.entries if e[1] == "root")
    assert [(b, sl) for b, _, sl, _ in roots] == [(0, 0), (0, 1)]
    assert roots[0][3] == ens.trees[0].features[0]
    assert roots[1][3] == ens.trees[1].features[0]


def test_layout_spill_block_count_formula():
    for s, k, slots in ((4, 32, 64), (11, 16, 64), (3, 64, 64), (5, 8, 128)):
        ens = _small_ensemble(s=s, k=k, d=16)
        layout = build_layout(ens, slots)
        tpb = min(s * k, (slots // k) * k)
        assert layout.trees_per_block == tpb
        assert layout.num_blocks == -(-s * k // tpb)  # ceil
        # classes never straddle blocks
        for c in range(s):
            b0, _ = layout.class_position(c)
            bl, _ = divmod((c + 1) * k - 1, tpb)
            assert b0 == bl


def test_layout_rejects_oversize_class():
    ens = _small_ensemble(s=1, k=128, d=8)
    with pytest.raises(ModelFormatError):
        build_layout(ens, 64)


def test_layout_deterministic_and_roundtrips(tmp_path):
    ens = _small_ensemble(s=3, k=8, d=32)
    a = build_layout(ens, 128)
    b = build_layout(ens, 128)
    assert a == b
    p1, p2 = tmp_path / "l1.json", tmp_path / "l2.json"
    save_layout(a, p1)
    save_layout(load_layout(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# client packing
# ---------------------------------------------------------------------------


def test_pack_all_zero_sample(rng):
    ens = _small_ensemble(s=2, k=4, d=16)
    layout = build_layout(ens, 64)
    bundle = pack_client_input(np.zeros(16, dtype=np.int64), layout)
    for block in bundle.xgb_planes:
        for stream in ("root", "left", "right"):
            x0, x2 = block[stream]
            assert not x0.any() and not x2.any()
    assert not bundle.svm_vector.any()


def test_pack_all_deletion_sample():
    ens = _small_ensemble(s=2, k=4, d=16)
    layout = build_layout(ens, 64)
    bundle = pack_client_input(np.full(16, -1, dtype=np.int64), layout)
    for block, stream, slot, _ in layout.entries:
        x0, x2 = bundle.xgb_planes[block][stream]
        assert x0[slot] == 1 and x2[slot] == 0
    assert (bundle.svm_vector[:16] == -1).all()


def test_pack_unpack_recovers_one_hot_codes(rng):
    ens = _small_ensemble(s=2, k=8, d=24)
    layout = build_layout(ens, 64)
    raw = rng.integers(-2, 3, 24)
    bundle = pack_client_input(raw, layout)
    ternary = normalize_samples(raw)
    for block, stream, slot, feature in layout.entries:
        x0, x2 = bundle.xgb_planes[block][stream]
        code = encode_feature(int(ternary[feature]))
        assert x0[slot] == code.x0
        assert x2[slot] == code.x2


def test_pack_rejects_short_sample():
    ens = _small_ensemble(s=1, k=2, d=8)
    layout = build_layout(ens, 64)
    with pytest.raises(ModelFormatError):
        pack_client_input(np.zeros(4, dtype=np.int64), layout)


def test_slot_streams_hold_split_codes_and_leaves():
    ens = _small_ensemble(s=2, k=4, d=16)
    layout = build_layout(ens, 64)
    planes = ensemble_slot_streams(ens, layout)
    from hedgerow.trees import transform_leaves

    tree3 = ens.trees[3]
    assert planes[0]["y"]["left"][3] == tree3.splits[1]
    tl = transform_leaves(tree3.leaves)
    assert planes[0]["l"][0][3] == tl.l1
    assert planes[0]["l"][3][3] == tl.l4
    # slots past the last tree stay zero-leaf
    assert planes[-1]["l"][3][ens.num_classes * ens.trees_per_class :].sum() == 0


# ---------------------------------------------------------------------------
# dataset CSV
# ---------------------------------------------------------------------------


def test_dataset_roundtrip(tmp_path, rng):
    samples = rng.integers(-2, 3, (10, 6))
    labels = rng.integers(0, 3, 10)
    ds = Dataset(samples, labels)
    path = tmp_path / "d.csv"
    save_dataset(ds, path, include_labels=True)
    again = load_dataset(path, labeled=True)
    assert np.array_equal(again.samples, samples)
    assert np.array_equal(again.labels, labels)
    unlabeled = load_dataset(path, labeled=False)
    assert unlabeled.samples.shape == (10, 7)  # labels kept as a data column


def test_dataset_rejects_out_of_range():
    with pytest.raises(ModelFormatError):
        Dataset(np.array([[3]]), None)


def test_normalize_samples_matches_scalar_rule(rng):
    raw = rng.integers(-2, 3, 100)
    from hedgerow.compare import normalize_copy_number

    v = normalize_samples(raw)
    for i in range(100):
        assert v[i] == normalize_copy_number(int(raw[i]))


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------


def test_gen_synthetic_deterministic():
    a = gen_synthetic(seed=12, s=3, k=4, d=20, n_samples=30)
    b = gen_synthetic(seed=12, s=3, k=4, d=20, n_samples=30)
    assert a[0] == b[0]
    assert np.array_equal(a[1].weights, b[1].weights)
    assert np.array_equal(a[2].samples, b[2].samples)
    assert np.array_equal(a[2].labels, b[2].labels)
    c = gen_synthetic(seed=13, s=3, k=4, d=20, n_samples=30)
    assert not np.array_equal(a[2].samples, c[2].samples)


def test_gen_synthetic_agreement_about_ninety_percent():
    ens, _, ds = gen_synthetic(seed=2, s=11, k=32, d=128, n_samples=1000)
    agreement = ensemble_agreement(ens, ds)
    assert 0.87 <= agreement <= 0.93


def test_gen_synthetic_thresholds_admissible():
    ens, _, _ = gen_synthetic(seed=3, s=2, k=4, d=10, n_samples=5)
    for tree in ens.trees:
        assert all(y in (0, 1) for y in tree.splits)


def test_batch_scores_match_scalar_path(rng):
    ens, _, ds = gen_synthetic(seed=8, s=4, k=8, d=32, n_samples=20)
    ternary = normalize_samples(ds.samples)
    batch = ensemble_scores_clear_batch(ens, ternary)
    for i in range(ds.num_samples):
        assert np.array_equal(batch[i], ensemble_scores_clear(ens, ternary[i]))
