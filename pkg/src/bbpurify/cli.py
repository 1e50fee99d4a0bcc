"""Operator command line.

Subcommands: poison, purify, evaluate, bench-transforms, sweep. Every run
writes the resolved configuration to <out-dir>/run_config.json so it can be
replayed with --from-config; wall-clock logging goes to <out-dir>/run.log.

Exit codes: 0 ok (possibly with per-sample warnings), 2 usage, 3 I/O or
malformed manifest, 4 oracle/protocol failure, 5 internal invariant violation.
"""

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import attacks, bench, pipeline
from .errors import ManifestError, ProtocolError, PurifyError, TransportError
from .image_ops import ScaleSampler, load_png, save_png
from .oracle import oracle_from_spec, open_upscaler, upscaler_from_spec
from .spectral import forward, magnitude_image

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_ORACLE = 4
EXIT_INTERNAL = 5

log = logging.getLogger("bbpurify")


# ---------------------------------------------------------------------------
# manifests and run bookkeeping


def read_manifest(path):
    """Rows of {filename, label, target_label?, attack_kind?} from a CSV."""
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "filename" not in reader.fieldnames \
                    or "label" not in reader.fieldnames:
                raise ManifestError(f"{path}: manifest needs filename,label columns")
            for line in reader:
                row = {"filename": line["filename"], "label": int(line["label"])}
                if line.get("target_label"):
                    row["target_label"] = int(line["target_label"])
                    row["attack_kind"] = line.get("attack_kind", "")
                rows.append(row)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except ValueError as exc:
        raise ManifestError(f"{path}: bad label value: {exc}") from exc
    return rows


def load_samples(rows, image_dir, poisoned):
    image_dir = Path(image_dir)
    out = []
    for row in rows:
        img = load_png(image_dir / row["filename"])
        if poisoned:
            if "target_label" not in row:
                raise ManifestError(f"{row['filename']}: poisoned manifest row "
                                    "lacks target_label")
            out.append((row["filename"], img, row["label"], row["target_label"],
                        row.get("attack_kind", "")))
        else:
            out.append((row["filename"], img, row["label"]))
    return out


def write_run_config(out_dir, args):
    resolved = {k: v for k, v in sorted(vars(args).items())
                if k not in ("func", "from_config")}
    with open(Path(out_dir) / "run_config.json", "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")


def setup_run(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        filename=out_dir / "run.log", level=logging.INFO, force=True,
        format="%(asctime)s %(levelname)s %(message)s")
    write_run_config(out_dir, args)
    log.info("command: %s", " ".join(sys.argv))
    return out_dir


def defense_config(args):
    return pipeline.DefenseConfig(
        sampler=ScaleSampler(args.s_min, args.s_max, seed=args.seed),
        upscaler=upscaler_from_spec(args.upscaler),
        n_bands=args.n_bands,
        edge_restore=pipeline.EdgeRestore(kind=args.edge_restore),
        quantize_before_query=not args.no_quantize)


def open_oracles(args):
    return [oracle_from_spec(args.oracle) for _ in range(args.jobs)]


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


# ---------------------------------------------------------------------------
# subcommands


def cmd_poison(args):
    out_dir = setup_run(args)
    rows = read_manifest(args.labels)
    image_dir = Path(args.images)
    clean = [(load_png(image_dir / r["filename"]), r["label"]) for r in rows]

    params = {}
    if args.attack == "badnets_patch":
        params = {"patch_size": args.patch_size, "patch_value": args.patch_value,
                  "corner": args.corner}
    elif args.attack == "blend":
        if not args.blend_image:
            raise ManifestError("blend attack needs --blend-image")
        params = {"alpha": args.alpha, "blend_image": load_png(args.blend_image)}
    elif args.attack == "sig_sinusoid":
        params = {"delta": args.delta, "frequency": args.frequency}
    elif args.attack == "freq_band":
        params = {"band_index": args.band_index, "n": args.n_bands,
                  "amplitude": args.amplitude}
    spec = attacks.AttackSpec(args.attack, args.target, params, seed=args.seed)
    chosen = attacks.select_poison_indices([r["label"] for r in rows],
                                           args.target, args.rate, args.seed)

    img_out = out_dir / "images"
    img_out.mkdir(exist_ok=True)
    manifest_rows = []
    for i, row in enumerate(rows):
        name = row["filename"]
        img = clean[i][0]
        if i in chosen:
            out_img = attacks.apply_attack(img, spec)
            label = args.target if args.relabel else row["label"]
            manifest_rows.append([name, label, args.target, args.attack, args.seed])
        else:
            out_img = img
            manifest_rows.append([name, row["label"], None, None, None])
        save_png(out_img, img_out / name)
    write_csv(out_dir / "manifest.csv",
              ["filename", "label", "target_label", "attack_kind", "seed"],
              manifest_rows)
    n_poisoned = len(chosen)
    print(f"poisoned {n_poisoned} of {len(rows)} samples -> {out_dir}")
    return EXIT_OK


def cmd_purify(args):
    out_dir = setup_run(args)
    rows = read_manifest(args.manifest)
    cfg = defense_config(args)
    oracles = open_oracles(args)
    image_dir = Path(args.images)
    img_out = out_dir / "images"
    img_out.mkdir(exist_ok=True)

    outcome_rows = []
    warnings = 0
    upscaler = open_upscaler(cfg.upscaler)
    try:
        for row in rows:
            name = row["filename"]
            img = load_png(image_dir / name)
            try:
                outcome, ms = pipeline.timed_purify(img, oracles[0], cfg, upscaler=upscaler)
            except PurifyError as exc:
                warnings += 1
                log.warning("sample %s failed: %s", name, exc)
                outcome_rows.append([name, "error", None, exc.partial["queries_used"],
                                     None, None])
                continue
            save_png(outcome.output, img_out / name)
            if args.dump_spectra:
                spec_dir = out_dir / "spectra"
                spec_dir.mkdir(exist_ok=True)
                mag = magnitude_image(forward(outcome.output))
                save_png(mag.astype(np.float64) / 255.0, spec_dir / name)
            outcome_rows.append([
                name, outcome.decision,
                outcome.band.index if outcome.band else None,
                outcome.queries_used, outcome.drawn_s, ms])
    finally:
        upscaler.close()
        for o in oracles:
            o.close()
    write_csv(out_dir / "outcomes.csv",
              ["filename", "decision", "band", "queries", "drawn_s", "wall_time_ms"],
              outcome_rows)
    if warnings:
        print(f"warning: {warnings} samples failed; see run.log", file=sys.stderr)
    print(f"purified {len(rows) - warnings}/{len(rows)} samples -> {out_dir}")
    return EXIT_OK


def _evaluate_records(args, cfg, oracles):
    clean_rows = read_manifest(args.clean_manifest)
    poisoned_rows = read_manifest(args.poisoned_manifest)
    image_dir = Path(args.images)
    records = []
    warnings = 0
    upscaler = open_upscaler(cfg.upscaler)
    try:
        for row in clean_rows + poisoned_rows:
            name = row["filename"]
            img = load_png(image_dir / name)
            poisoned = "target_label" in row
            try:
                outcome, ms = pipeline.timed_purify(img, oracles[0], cfg, upscaler=upscaler)
            except PurifyError as exc:
                warnings += 1
                log.warning("sample %s failed: %s", name, exc)
                continue
            records.append(bench.EvalRecord(
                sample_id=name, is_poisoned=poisoned, true_label=row["label"],
                predicted_before=outcome.original_label,
                predicted_after=outcome.final_label,
                target_label=row.get("target_label"),
                attack_kind=row.get("attack_kind", ""),
                decision=outcome.decision, queries=outcome.queries_used,
                wall_time_ms=ms))
    finally:
        upscaler.close()
    return records, warnings


def cmd_evaluate(args):
    out_dir = setup_run(args)
    cfg = defense_config(args)
    oracles = open_oracles(args)
    try:
        records, warnings = _evaluate_records(args, cfg, oracles)
    finally:
        for o in oracles:
            o.close()
    if not records:
        raise ManifestError("no samples evaluated")

    kinds = sorted({r.attack_kind for r in records if r.is_poisoned})
    clean_records = [r for r in records if not r.is_poisoned]
    rows = []
    for kind in kinds:
        sub = [r for r in records if r.is_poisoned and r.attack_kind == kind]
        summary = bench.compute_metrics(clean_records + sub)
        base_asr = (sum(r.predicted_before == r.target_label for r in sub) / len(sub))
        reduction = base_asr - summary.asr if summary.asr is not None else None
        rows.append([kind, summary.ca, summary.pa, summary.asr, reduction,
                     summary.mean_queries, summary.mean_time_ms])
    if not kinds:
        summary = bench.compute_metrics(clean_records)
        rows.append(["clean-only", summary.ca, None, None, None,
                     summary.mean_queries, summary.mean_time_ms])
    write_csv(out_dir / "metrics.csv",
              ["attack", "ca", "pa", "asr", "asr_reduction", "mean_queries",
               "mean_time_ms"], rows)
    write_csv(out_dir / "records.csv",
              ["sample_id", "is_poisoned", "true_label", "target_label",
               "predicted_before", "predicted_after", "decision", "queries",
               "wall_time_ms"],
              [[r.sample_id, int(r.is_poisoned), r.true_label, r.target_label,
                r.predicted_before, r.predicted_after, r.decision, r.queries,
                r.wall_time_ms] for r in records])
    timing = bench.timing_report([r for r in records if r.is_poisoned])
    write_csv(out_dir / "timing.csv", ["attack", "mean_ms", "median_ms", "p95_ms"],
              timing)
    if warnings:
        print(f"warning: {warnings} samples failed; see run.log", file=sys.stderr)
    print(f"evaluated {len(records)} samples -> {out_dir / 'metrics.csv'}")
    return EXIT_OK


def cmd_bench_transforms(args):
    out_dir = setup_run(args)
    oracles = open_oracles(args)
    clean = load_samples(read_manifest(args.clean_manifest), args.images, poisoned=False)
    poisoned = load_samples(read_manifest(args.poisoned_manifest), args.images,
                            poisoned=True)
    names = args.transforms.split(",") if args.transforms else None
    try:
        rows, base = bench.transform_bench(clean, poisoned, oracles[0],
                                           transforms=names, seed=args.seed)
    finally:
        for o in oracles:
            o.close()
    out_rows = [[name, s.ca, s.pa, s.asr, red, s.mean_queries, s.mean_time_ms]
                for name, s, red in rows]
    write_csv(out_dir / "metrics.csv",
              ["transform", "ca", "pa", "asr", "asr_reduction", "mean_queries",
               "mean_time_ms"], out_rows)
    with open(out_dir / "metrics.md", "w") as fh:
        fh.write("| transform | CA | PA | ASR | ASR reduction |\n")
        fh.write("|---|---|---|---|---|\n")
        fh.write(f"| (baseline) | {fmt(base.ca)} | {fmt(base.pa)} | {fmt(base.asr)} | |\n")
        for name, s, red in rows:
            fh.write(f"| {name} | {fmt(s.ca)} | {fmt(s.pa)} | {fmt(s.asr)} "
                     f"| {fmt(red)} |\n")
    print(f"benchmarked {len(rows)} transforms -> {out_dir / 'metrics.csv'}")
    return EXIT_OK


def cmd_sweep(args):
    out_dir = setup_run(args)
    cfg = defense_config(args)
    oracles = open_oracles(args)
    clean = load_samples(read_manifest(args.clean_manifest), args.images, poisoned=False)
    poisoned = load_samples(read_manifest(args.poisoned_manifest), args.images,
                            poisoned=True)
    s_values = [float(s) for s in args.s_values.split(",")]
    try:
        rows = bench.scale_sweep(poisoned, clean, oracles[0], cfg, s_values)
    finally:
        for o in oracles:
            o.close()
    write_csv(out_dir / "sweep.csv", ["s", "pa", "asr"], rows)
    print(f"swept {len(rows)} scales -> {out_dir / 'sweep.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


def add_common(parser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="out")
    parser.add_argument("--oracle", default="mock:none?classes=10",
                        help="mock:patch?... | mock:band?... | mock:none?... | "
                             "cmd:<command> | tcp:host:port")
    parser.add_argument("--upscaler", default="builtin:bicubic",
                        help="builtin:{bilinear,bicubic,lanczos3} | cmd:<command> "
                             "| tcp:host:port")
    parser.add_argument("--n-bands", type=int, default=8)
    parser.add_argument("--s-min", type=float, default=0.45)
    parser.add_argument("--s-max", type=float, default=0.55)
    parser.add_argument("--edge-restore", default="unsharp",
                        choices=["unsharp", "bilateral", "none"])
    parser.add_argument("--no-quantize", action="store_true",
                        help="skip 8-bit quantization before oracle queries")
    parser.add_argument("--jobs", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bbpurify",
        description="Black-box backdoor purification toolkit")
    parser.add_argument("--from-config", help="replay a saved run_config.json")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("poison", help="write a poisoned copy of a dataset")
    add_common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True, help="CSV with filename,label")
    p.add_argument("--attack", required=True, choices=list(attacks.ATTACK_KINDS))
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--relabel", action="store_true",
                   help="write the target label into the manifest (training sets)")
    p.add_argument("--patch-size", type=int, default=6)
    p.add_argument("--patch-value", type=float, default=1.0)
    p.add_argument("--corner", default="BR", choices=list(attacks.CORNERS))
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--blend-image", default="")
    p.add_argument("--delta", type=float, default=20.0 / 255.0)
    p.add_argument("--frequency", type=int, default=6)
    p.add_argument("--band-index", type=int, default=5)
    p.add_argument("--amplitude", type=float, default=0.2)
    p.set_defaults(func=cmd_poison)

    p = sub.add_parser("purify", help="purify a manifest of images")
    add_common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--dump-spectra", action="store_true",
                   help="also write log-magnitude spectrum PNGs")
    p.set_defaults(func=cmd_purify)

    p = sub.add_parser("evaluate", help="purify + CA/PA/ASR metrics")
    add_common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--clean-manifest", required=True)
    p.add_argument("--poisoned-manifest", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-transforms", help="preliminary-study transform bench")
    add_common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--clean-manifest", required=True)
    p.add_argument("--poisoned-manifest", required=True)
    p.add_argument("--transforms", default="",
                   help="comma list; default: all seven pairs")
    p.set_defaults(func=cmd_bench_transforms)

    p = sub.add_parser("sweep", help="Stage-1-only PA/ASR across fixed scales")
    add_common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--clean-manifest", required=True)
    p.add_argument("--poisoned-manifest", required=True)
    p.add_argument("--s-values", default="0.25,0.5,0.9")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.from_config:
        try:
            with open(args.from_config) as fh:
                saved = json.load(fh)
        except (OSError, ValueError) as exc:
            print(f"cannot load config: {exc}", file=sys.stderr)
            return EXIT_IO
        replay = []
        command = saved.pop("command")
        replay.append(command)
        for key, value in saved.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(value, bool):
                if value:
                    replay.append(flag)
            elif value is not None and value != "":
                replay.extend([flag, str(value)])
        args = parser.parse_args(replay)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, FileNotFoundError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TransportError, ProtocolError) as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except ValueError as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
