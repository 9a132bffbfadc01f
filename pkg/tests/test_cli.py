"""CLI flows: file-based phases, role separation, exit codes, determinism."""

import json
import os

import numpy as np
import pytest

from hedgerow import make_test_params
from hedgerow.cli import EXIT_CRYPTO, EXIT_FORMAT, EXIT_OK, main
from hedgerow.modelio import (
    build_layout,
    gen_synthetic,
    load_dataset,
    normalize_samples,
    save_dataset,
    save_ensemble,
    save_layout,
    save_svm,
    ensemble_scores_clear_batch,
)
from hedgerow.pipeline import (
    export_public_keyset,
    load_keyset,
    run_decrypt,
    run_encrypt,
    run_infer,
    write_keyset,
)
from hedgerow.svm import svm_scores_clear


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Small-ring working directory with keys, models, data, and bundles."""
    base = tmp_path_factory.mktemp("cliwork")
    params = make_test_params(256, num_primes=11, depth_budget=3)
    keydir = base / "keys"
    write_keyset(keydir, params, seed=99)
    server = base / "server-keys"
    export_public_keyset(keydir, server)

    ens, svm_model, ds = gen_synthetic(seed=21, s=3, k=8, d=32, n_samples=4)
    save_ensemble(ens, base / "ensemble.json")
    save_svm(svm_model, base / "svm.json")
    save_dataset(ds, base / "data.csv", include_labels=True)

    layout = build_layout(ens, params.slot_count, svm_features=svm_model.num_features)
    save_layout(layout, base / "layout.json")

    keyset = load_keyset(keydir, need_secret=True)
    dataset = load_dataset(base / "data.csv", labeled=True)
    run_encrypt(layout, dataset, keyset, 7, base / "enc")
    return {
        "base": base,
        "params": params,
        "keydir": keydir,
        "server": server,
        "ens": ens,
        "svm": svm_model,
        "ds": ds,
        "layout": layout,
    }


def test_infer_decrypt_xgb_matches_clear_pipeline(workspace):
    base = workspace["base"]
    run_infer("xgb", base / "ensemble.json", base / "enc", workspace["server"], base / "out-xgb")
    _, preds, conf = run_decrypt(base / "out-xgb", workspace["keydir"], base / "report-xgb.csv")
    ref = ensemble_scores_clear_batch(
        workspace["ens"], normalize_samples(workspace["ds"].samples)
    )
    scale = workspace["ens"].quant_scale
    assert np.array_equal(conf * scale, ref.astype(np.float64))
    assert np.array_equal(preds, np.argmax(ref, axis=1))


def test_infer_decrypt_encmodel_identical_scores(workspace):
    base = workspace["base"]
    run_infer(
        "xgb-encmodel", base / "ensemble.json", base / "enc", workspace["server"], base / "out-em"
    )
    _, _, conf_em = run_decrypt(base / "out-em", workspace["keydir"], base / "report-em.csv")
    _, _, conf_plain = run_decrypt(base / "out-xgb", workspace["keydir"], base / "r2.csv")
    assert np.array_equal(conf_em, conf_plain)


def test_infer_decrypt_svm_matches_clear(workspace):
    base = workspace["base"]
    run_infer("svm", base / "svm.json", base / "enc", workspace["server"], base / "out-svm")
    _, preds, conf = run_decrypt(base / "out-svm", workspace["keydir"], base / "report-svm.csv")
    tern = normalize_samples(workspace["ds"].samples)
    model = workspace["svm"]
    ref = np.stack([svm_scores_clear(model, row[: model.num_features]) for row in tern])
    assert np.array_equal(conf * model.quant_scale, ref.astype(np.float64))
    assert np.array_equal(preds, np.argmax(ref, axis=1))


def test_report_csv_shape(workspace):
    base = workspace["base"]
    lines = (base / "report-xgb.csv").read_text().strip().splitlines()
    assert lines[0] == "sample,pred,conf_0,conf_1,conf_2"
    assert len(lines) == 1 + workspace["ds"].num_samples


def test_infer_refuses_secret_key(workspace):
    base = workspace["base"]
    rc = main(
        [
            "infer", "--mode", "xgb",
            "--model", str(base / "ensemble.json"),
            "--in", str(base / "enc"),
            "--keys", str(workspace["keydir"]),  # holds secret.key
            "--out", str(base / "refused"),
        ]
    )
    assert rc == EXIT_FORMAT
    assert not (base / "refused").exists()


def test_infer_thread_count_invariance(workspace):
    base = workspace["base"]
    old = os.environ.get("HEDGEROW_THREADS")
    try:
        os.environ["HEDGEROW_THREADS"] = "1"
        run_infer("xgb", base / "ensemble.json", base / "enc", workspace["server"], base / "t1")
        os.environ["HEDGEROW_THREADS"] = "3"
        run_infer("xgb", base / "ensemble.json", base / "enc", workspace["server"], base / "t3")
    finally:
        if old is None:
            os.environ.pop("HEDGEROW_THREADS", None)
        else:
            os.environ["HEDGEROW_THREADS"] = old
    for sample_dir in sorted((base / "t1").iterdir()):
        if sample_dir.is_dir():
            for f in sorted(sample_dir.iterdir()):
                twin = base / "t3" / sample_dir.name / f.name
                assert f.read_bytes() == twin.read_bytes()


def test_encrypt_deterministic_bytes(workspace, tmp_path):
    base = workspace["base"]
    keyset = load_keyset(workspace["keydir"], need_secret=True)
    dataset = load_dataset(base / "data.csv", labeled=True)
    run_encrypt(workspace["layout"], dataset, keyset, 7, tmp_path / "enc2")
    for sample_dir in sorted((base / "enc").iterdir()):
        if sample_dir.is_dir():
            for f in sorted(sample_dir.iterdir()):
                twin = tmp_path / "enc2" / sample_dir.name / f.name
                assert f.read_bytes() == twin.read_bytes()


def test_depth_guard_rejects_shallow_params(workspace, tmp_path):
    base = workspace["base"]
    shallow = make_test_params(256, num_primes=11, depth_budget=1)
    keydir = tmp_path / "shallow-keys"
    write_keyset(keydir, shallow, seed=1)
    server = tmp_path / "shallow-server"
    export_public_keyset(keydir, server)
    keyset = load_keyset(keydir, need_secret=True)
    dataset = load_dataset(base / "data.csv", labeled=True)
    layout = build_layout(workspace["ens"], shallow.slot_count)
    run_encrypt(layout, dataset, keyset, 7, tmp_path / "enc")
    rc = main(
        [
            "infer", "--mode", "xgb",
            "--model", str(base / "ensemble.json"),
            "--in", str(tmp_path / "enc"),
            "--keys", str(server),
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == EXIT_FORMAT


def test_noise_exhaustion_exits_crypto(tmp_path):
    # parameters far too small for the depth-2 circuit: decrypt must refuse
    params = make_test_params(64, num_primes=4, depth_budget=2)
    keydir = tmp_path / "keys"
    write_keyset(keydir, params, seed=3)
    server = tmp_path / "server"
    export_public_keyset(keydir, server)
    ens, svm_model, ds = gen_synthetic(seed=5, s=2, k=4, d=16, n_samples=1)
    save_ensemble(ens, tmp_path / "ens.json")
    layout = build_layout(ens, params.slot_count)
    keyset = load_keyset(keydir, need_secret=True)
    run_encrypt(layout, ds, keyset, 1, tmp_path / "enc")
    run_infer("xgb", tmp_path / "ens.json", tmp_path / "enc", server, tmp_path / "out")
    rc = main(
        [
            "decrypt",
            "--in", str(tmp_path / "out"),
            "--keys", str(keydir),
            "--report", str(tmp_path / "r.csv"),
        ]
    )
    assert rc == EXIT_CRYPTO


def test_cli_synth_layout_roundtrip(tmp_path):
    assert (
        main(
            [
                "synth", "--seed", "11", "--classes", "2", "--trees", "4",
                "--features", "16", "--samples", "3", "--out", str(tmp_path / "synth"),
            ]
        )
        == EXIT_OK
    )
    for name in ("ensemble.json", "svm.json", "data.csv"):
        assert (tmp_path / "synth" / name).exists()
    params = make_test_params(64, num_primes=5, depth_budget=2)
    write_keyset(tmp_path / "keys", params, seed=1)
    assert (
        main(
            [
                "layout",
                "--model", str(tmp_path / "synth" / "ensemble.json"),
                "--svm", str(tmp_path / "synth" / "svm.json"),
                "--keys", str(tmp_path / "keys"),
                "--out", str(tmp_path / "layout.json"),
            ]
        )
        == EXIT_OK
    )
    doc = json.loads((tmp_path / "layout.json").read_text())
    assert doc["slot_count"] == 64


def test_usage_errors_exit_two():
    with pytest.raises(SystemExit) as err:
        main(["keygen", "--preset", "svm-d1"])  # missing --seed/--out
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["infer", "--mode", "bogus", "--model", "x", "--in", "y", "--keys", "z", "--out", "w"])
    assert err.value.code == 2


def test_bad_seed_exits_format(tmp_path):
    rc = main(["synth", "--seed", "xyz", "--out", str(tmp_path / "s")])
    assert rc == EXIT_FORMAT


def test_missing_model_file_exits_format(workspace, tmp_path):
    rc = main(
        [
            "infer", "--mode", "xgb",
            "--model", str(tmp_path / "missing.json"),
            "--in", str(workspace["base"] / "enc"),
            "--keys", str(workspace["server"]),
            "--out", str(tmp_path / "o"),
        ]
    )
    assert rc == EXIT_FORMAT
