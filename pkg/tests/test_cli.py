import csv
import json

import pytest

from bbpurify import cli
from bbpurify.image_ops import save_png

import helpers

PATCH_ORACLE = ("mock:patch?top=25&left=25&h=6&w=6&threshold=0.92"
                "&target=8&classes=10")


def write_dataset(root, samples, name="labels.csv"):
    img_dir = root / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (img, label) in enumerate(samples):
        fname = f"img{i:04d}.png"
        save_png(img, img_dir / fname)
        rows.append((fname, label))
    with open(root / name, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label"])
        writer.writerows(rows)
    return img_dir, root / name


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(argv):
    return cli.main([str(a) for a in argv])


def test_poison_writes_exact_count(tmp_path):
    samples = helpers.make_family_a(100, seed=130)
    img_dir, labels = write_dataset(tmp_path, samples)
    out = tmp_path / "out"
    rc = run(["poison", "--images", img_dir, "--labels", labels,
              "--attack", "badnets_patch", "--target", "8", "--rate", "0.1",
              "--seed", "7", "--out-dir", out])
    assert rc == 0
    rows = read_csv(out / "manifest.csv")
    assert len(rows) == 100
    poisoned = [r for r in rows if r["target_label"]]
    assert len(poisoned) == 10
    assert all(r["attack_kind"] == "badnets_patch" for r in poisoned)
    assert (out / "images" / rows[0]["filename"]).exists()
    assert (out / "run_config.json").exists()


def test_purify_empty_manifest(tmp_path):
    manifest = tmp_path / "empty.csv"
    manifest.write_text("filename,label\n")
    (tmp_path / "images").mkdir()
    out = tmp_path / "out"
    rc = run(["purify", "--images", tmp_path / "images", "--manifest", manifest,
              "--oracle", PATCH_ORACLE, "--out-dir", out])
    assert rc == 0
    content = (out / "outcomes.csv").read_text().strip().splitlines()
    assert content == ["filename,decision,band,queries,drawn_s,wall_time_ms"]


def test_purify_and_decisions(tmp_path):
    clean = helpers.make_family_a(3, seed=131)
    poisoned = [(helpers.poison_family([s], helpers.badnets_spec())[0][1], s[1])
                for s in clean[:2]]
    img_dir, manifest = write_dataset(tmp_path, poisoned + clean[2:])
    out = tmp_path / "out"
    rc = run(["purify", "--images", img_dir, "--manifest", manifest,
              "--oracle", PATCH_ORACLE, "--upscaler", "builtin:bilinear",
              "--out-dir", out])
    assert rc == 0
    rows = read_csv(out / "outcomes.csv")
    assert [r["decision"] for r in rows] == ["stage1_flip", "stage1_flip",
                                             "assumed_clean"]
    assert all((out / "images" / r["filename"]).exists() for r in rows)


def test_evaluate_metrics_schema(tmp_path):
    clean = helpers.make_family_a(4, seed=132)
    pois_raw = helpers.make_family_a(4, seed=133)
    poisoned = helpers.poison_family(pois_raw, helpers.badnets_spec())

    img_dir = tmp_path / "images"
    img_dir.mkdir()
    with open(tmp_path / "clean.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "label"])
        for i, (img, label) in enumerate(clean):
            name = f"c{i}.png"
            save_png(img, img_dir / name)
            w.writerow([name, label])
    with open(tmp_path / "poisoned.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "label", "target_label", "attack_kind"])
        for name, img, label, target, kind in poisoned:
            save_png(img, img_dir / name)
            w.writerow([name, label, target, kind])

    out = tmp_path / "out"
    rc = run(["evaluate", "--images", img_dir,
              "--clean-manifest", tmp_path / "clean.csv",
              "--poisoned-manifest", tmp_path / "poisoned.csv",
              "--oracle", PATCH_ORACLE, "--out-dir", out])
    assert rc == 0
    rows = read_csv(out / "metrics.csv")
    assert len(rows) == 1
    row = rows[0]
    assert row["attack"] == "badnets_patch"
    asr = float(row["asr"])
    assert 0.0 <= asr <= 1.0
    assert asr <= 0.05  # the patch mock family purifies fully
    assert float(row["ca"]) == 1.0
    assert (out / "records.csv").exists()
    assert (out / "timing.csv").exists()


def test_sweep_csv(tmp_path):
    clean = helpers.make_family_b(2, seed=134)
    pois = helpers.poison_family(helpers.make_family_b(2, seed=135),
                                 helpers.badnets_spec())
    img_dir = tmp_path / "images"
    img_dir.mkdir()
    with open(tmp_path / "clean.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "label"])
        for i, (img, label) in enumerate(clean):
            save_png(img, img_dir / f"c{i}.png")
            w.writerow([f"c{i}.png", label])
    with open(tmp_path / "poisoned.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "label", "target_label", "attack_kind"])
        for name, img, label, target, kind in pois:
            save_png(img, img_dir / name)
            w.writerow([name, label, target, kind])
    thresholds = ",".join(f"{t:.6f}" for t in helpers.texture_thresholds())
    out = tmp_path / "out"
    rc = run(["sweep", "--images", img_dir,
              "--clean-manifest", tmp_path / "clean.csv",
              "--poisoned-manifest", tmp_path / "poisoned.csv",
              "--oracle", f"mock:patch?top=25&left=25&h=6&w=6&threshold=0.92"
                          f"&target=8&classes=10&fallback=texture"
                          f"&thresholds={thresholds}",
              "--s-values", "0.25,0.9", "--out-dir", out])
    assert rc == 0
    rows = read_csv(out / "sweep.csv")
    assert len(rows) == 2
    assert float(rows[0]["asr"]) <= float(rows[1]["asr"])


def test_bench_transforms_csv(tmp_path):
    clean = helpers.make_family_a(3, seed=136)
    pois = helpers.poison_family(helpers.make_family_a(3, seed=137),
                                 helpers.badnets_spec())
    img_dir = tmp_path / "images"
    img_dir.mkdir()
    with open(tmp_path / "clean.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "label"])
        for i, (img, label) in enumerate(clean):
            save_png(img, img_dir / f"c{i}.png")
            w.writerow([f"c{i}.png", label])
    with open(tmp_path / "poisoned.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "label", "target_label", "attack_kind"])
        for name, img, label, target, kind in pois:
            save_png(img, img_dir / name)
            w.writerow([name, label, target, kind])
    out = tmp_path / "out"
    rc = run(["bench-transforms", "--images", img_dir,
              "--clean-manifest", tmp_path / "clean.csv",
              "--poisoned-manifest", tmp_path / "poisoned.csv",
              "--oracle", PATCH_ORACLE,
              "--transforms", "down-up,median,identity", "--out-dir", out])
    assert rc == 0
    rows = read_csv(out / "metrics.csv")
    assert {r["transform"] for r in rows} == {"down-up", "median", "identity"}
    assert (out / "metrics.md").exists()


def drop_timing(path):
    rows = read_csv(path)
    for r in rows:
        r.pop("wall_time_ms", None)
    return rows


def test_purify_idempotent_given_seed(tmp_path):
    samples = helpers.make_family_a(3, seed=138)
    img_dir, manifest = write_dataset(tmp_path, samples)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        rc = run(["purify", "--images", img_dir, "--manifest", manifest,
                  "--oracle", PATCH_ORACLE, "--seed", "3", "--out-dir", out])
        assert rc == 0
        outs.append(out)
    assert drop_timing(outs[0] / "outcomes.csv") == drop_timing(outs[1] / "outcomes.csv")
    for row in read_csv(outs[0] / "outcomes.csv"):
        fa = (outs[0] / "images" / row["filename"]).read_bytes()
        fb = (outs[1] / "images" / row["filename"]).read_bytes()
        assert fa == fb


def test_from_config_replays(tmp_path):
    samples = helpers.make_family_a(2, seed=139)
    img_dir, manifest = write_dataset(tmp_path, samples)
    out1 = tmp_path / "first"
    rc = run(["purify", "--images", img_dir, "--manifest", manifest,
              "--oracle", PATCH_ORACLE, "--seed", "11", "--out-dir", out1])
    assert rc == 0

    config = json.loads((out1 / "run_config.json").read_text())
    config["out_dir"] = str(tmp_path / "second")
    replay_cfg = tmp_path / "replay.json"
    replay_cfg.write_text(json.dumps(config))
    rc = run(["--from-config", replay_cfg])
    assert rc == 0
    assert (drop_timing(out1 / "outcomes.csv")
            == drop_timing(tmp_path / "second" / "outcomes.csv"))


def test_exit_code_io_error(tmp_path):
    rc = run(["purify", "--images", tmp_path, "--manifest", tmp_path / "missing.csv",
              "--oracle", PATCH_ORACLE, "--out-dir", tmp_path / "out"])
    assert rc == 3


def test_exit_code_oracle_error(tmp_path):
    samples = helpers.make_family_a(1, seed=140)
    img_dir, manifest = write_dataset(tmp_path, samples)
    rc = run(["purify", "--images", img_dir, "--manifest", manifest,
              "--oracle", "cmd:/nonexistent/oracle-server",
              "--out-dir", tmp_path / "out"])
    assert rc == 4  # unreachable oracle is a transport failure


def test_exit_code_usage():
    with pytest.raises(SystemExit) as exc:
        cli.main(["purify", "--bogus-flag"])
    assert exc.value.code == 2


def test_no_subcommand_is_usage_error():
    assert cli.main([]) == 2


def test_malformed_manifest_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("nope,nothing\n1,2\n")
    (tmp_path / "images").mkdir()
    rc = run(["purify", "--images", tmp_path / "images", "--manifest", bad,
              "--oracle", PATCH_ORACLE, "--out-dir", tmp_path / "out"])
    assert rc == 3


def test_run_config_round_trips_types(tmp_path):
    samples = helpers.make_family_a(1, seed=141)
    img_dir, manifest = write_dataset(tmp_path, samples)
    out = tmp_path / "out"
    rc = run(["purify", "--images", img_dir, "--manifest", manifest,
              "--oracle", PATCH_ORACLE, "--s-min", "0.5", "--s-max", "0.5",
              "--n-bands", "4", "--out-dir", out])
    assert rc == 0
    config = json.loads((out / "run_config.json").read_text())
    assert config["command"] == "purify"
    assert config["n_bands"] == 4
    assert config["s_min"] == 0.5
