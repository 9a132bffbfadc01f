"""Pipeline-level properties: bench determinism, comp scaling, reports."""

import time

import numpy as np
import pytest

from hedgerow import HeBackend, ModelFormatError, make_test_params
from hedgerow.modelio import (
    build_layout,
    ensemble_scores_clear_batch,
    ensemble_slot_streams,
    gen_synthetic,
    normalize_samples,
    pack_client_input,
)
from hedgerow.pipeline import (
    EvalReport,
    TimingReport,
    decrypt_class_scores,
    encrypt_bundle,
    infer_xgb_sample,
    infer_xgb_sample_encrypted_leaves,
    model_plane_plaintexts,
    run_bench,
)


def test_timing_report_invariants():
    TimingReport(1.0, 2.0, 3.0, 0.5, 3.5)
    with pytest.raises(ModelFormatError):
        TimingReport(1.0, 2.0, 3.0, 0.5, 2.9)  # end-to-end below a component
    with pytest.raises(ModelFormatError):
        TimingReport(-0.1, 0.0, 0.0, 0.0, 1.0)


def test_eval_report_range():
    EvalReport(0.5, 0.5, np.zeros((2, 2)))
    with pytest.raises(ModelFormatError):
        EvalReport(1.5, 0.5, np.zeros((2, 2)))


def test_bench_same_seed_same_outputs(tmp_path):
    a_t, a_e = run_bench("xgb", samples=2, seed=5, classes=2, trees=4, features=16,
                         workdir=tmp_path / "a")
    b_t, b_e = run_bench("xgb", samples=2, seed=5, classes=2, trees=4, features=16,
                         workdir=tmp_path / "b")
    assert np.array_equal(a_e.confidences, b_e.confidences)
    assert a_e.micro_auc == b_e.micro_auc
    assert (tmp_path / "a" / "report.csv").read_bytes() == (
        tmp_path / "b" / "report.csv"
    ).read_bytes()
    # key and ciphertext artifacts byte-identical too
    for rel in ("keys/secret.key", "encrypted/sample_00000/svm.ct"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_comp_scales_with_block_count():
    # same ring, same per-block circuit; 1 vs 3 ciphertext blocks
    params = make_test_params(256, num_primes=11, depth_budget=2)
    he = HeBackend(params)
    sk, pk, ek = he.keygen(seed=1)

    def timed_blocks(s, k, repeats=3):
        ens, _, ds = gen_synthetic(seed=2, s=s, k=k, d=32, n_samples=1)
        layout = build_layout(ens, params.slot_count)
        planes = model_plane_plaintexts(he, ensemble_slot_streams(ens, layout))
        bundle = pack_client_input(ds.samples[0], layout)
        cts = encrypt_bundle(he, pk, bundle, seed=3)
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            infer_xgb_sample(he, cts["xgb"], planes, layout, ek)
            best = min(best, time.perf_counter() - t0)
        return layout.num_blocks, best

    b1, t1 = timed_blocks(s=2, k=128)  # 256 trees = 1 block
    b3, t3 = timed_blocks(s=6, k=128)  # 768 trees = 3 blocks
    assert (b1, b3) == (1, 3)
    ratio = t3 / t1
    assert 1.8 <= ratio <= 5.0, f"comp did not scale ~linearly in blocks: {ratio:.2f}"


def test_encrypted_leaves_variant_matches(he256, keys256):
    params = he256.params
    sk, pk, ek = keys256
    ens, _, ds = gen_synthetic(seed=4, s=2, k=8, d=24, n_samples=2)
    layout = build_layout(ens, params.slot_count)
    planes = ensemble_slot_streams(ens, layout)
    pts = model_plane_plaintexts(he256, planes)
    from hedgerow.pipeline import Prg

    prg = Prg(9)
    enc_leaves = [
        [
            he256.encrypt(pk, he256.encode(block["l"][i]), prg.bytes(f"l{b}.{i}", 32))
            for i in range(4)
        ]
        for b, block in enumerate(planes)
    ]
    ref = ensemble_scores_clear_batch(ens, normalize_samples(ds.samples))
    for i in range(ds.num_samples):
        bundle = pack_client_input(ds.samples[i], layout)
        cts = encrypt_bundle(he256, pk, bundle, seed=100 + i)
        out = infer_xgb_sample_encrypted_leaves(he256, cts["xgb"], pts, enc_leaves, layout, ek)
        got = decrypt_class_scores(he256, sk, out, layout)
        assert np.array_equal(got, ref[i])


def test_clear_backend_runs_full_program(params256, clear256, clear_keys256):
    # the mirror backend executes the identical pipeline code path
    csk, cpk, cek = clear_keys256
    ens, _, ds = gen_synthetic(seed=6, s=3, k=8, d=24, n_samples=3)
    layout = build_layout(ens, params256.slot_count)
    pts = model_plane_plaintexts(clear256, ensemble_slot_streams(ens, layout))
    ref = ensemble_scores_clear_batch(ens, normalize_samples(ds.samples))
    for i in range(ds.num_samples):
        bundle = pack_client_input(ds.samples[i], layout)
        cts = encrypt_bundle(clear256, cpk, bundle, seed=i)
        out = infer_xgb_sample(clear256, cts["xgb"], pts, layout, cek)
        got = decrypt_class_scores(clear256, csk, out, layout)
        assert np.array_equal(got, ref[i])
    assert clear256.noise_budget(csk, out[0]) > 0
