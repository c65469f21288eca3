"""Batch command-line surface for the pipeline.

Subcommands: depth, encode, synth, train, eval, ablate, report. Every
run writes a ``run.json`` with the resolved configuration and seed into
its output directory, and nothing is written outside ``--out``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import imgio, metrics
from ._kernels import apply_thread_cap
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import DatasetError, load_dataset, build_samples, frame_label
from .dhg import assemble_dhg, depth_to_height, to_grayscale
from .experiment import BASELINES, baseline_predictor, evaluate_dataset, model_predictor, run_ablation
from .model import VARIANTS, EgoNet, EgoNetConfig, build_variant, normalize_variant
from .stereo import StereoCalib, disparity_to_depth, scanline_disparity_dp
from .synthetic import default_scene_specs, generate_dataset, specs_from_json_doc
from .training import PRESETS, TrainConfig, TrainingDiverged, leave_one_out_splits, train_loop, write_loss_trace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_run_json(out_dir, args, extra=None):
    doc = {k: v for k, v in vars(args).items() if k != "func"}
    doc.update(extra or {})
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=str)


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def _train_config(args):
    cfg = PRESETS[args.preset]
    overrides = {}
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    overrides["seed"] = args.seed
    from dataclasses import replace
    return replace(cfg, **overrides)


def cmd_depth(args):
    out = _ensure_out(args.out)
    left = imgio.read_png_u8(args.left)
    right = imgio.read_png_u8(args.right)
    if left.ndim == 3:
        left = np.moveaxis(left.astype(np.float64) / 255.0, -1, 0)
        left = to_grayscale(left)
    else:
        left = left.astype(np.float64) / 255.0
    if right.ndim == 3:
        right = np.moveaxis(right.astype(np.float64) / 255.0, -1, 0)
        right = to_grayscale(right)
    else:
        right = right.astype(np.float64) / 255.0
    calib = StereoCalib.load(args.calib)
    disp, valid = scanline_disparity_dp(left, right, args.max_disp, args.occlusion_cost)
    depth, dvalid = disparity_to_depth(disp, valid, calib)
    disp_png = np.clip(np.rint(disp), 0, 255)
    disp_png[~valid] = 0
    imgio.write_png_u8(os.path.join(out, "disparity.png"), disp_png.astype(np.uint8))
    imgio.write_pfm(os.path.join(out, "disparity.pfm"), np.where(valid, disp, 0.0))
    imgio.write_depth_png16(os.path.join(out, "depth.png"), depth, dvalid)
    imgio.write_pfm(os.path.join(out, "depth.pfm"), np.where(dvalid, depth, 0.0))
    _write_run_json(out, args)
    return EXIT_OK


def cmd_encode(args):
    out = _ensure_out(args.out)
    ds = load_dataset(os.path.join(args.dataset, "manifest.json"))
    for rec in ds.frames():
        frame = ds.load_frame(rec)
        rgb = np.moveaxis(frame["rgb"].astype(np.float64) / 255.0, -1, 0)
        height, _ = depth_to_height(frame["depth"], frame["depth_valid"], ds.calib,
                                    pitch_rad=frame.get("pitch_rad"))
        dhg, invalid = assemble_dhg(frame["depth"], height, to_grayscale(rgb),
                                    frame["depth_valid"], ds.bounds)
        fdir = os.path.join(out, rec.scene_id)
        os.makedirs(fdir, exist_ok=True)
        for ch, name in zip(dhg, ("d", "h", "g")):
            imgio.write_png_u8(os.path.join(fdir, f"{rec.frame_id}_{name}.png"),
                               np.rint(ch * 255).astype(np.uint8))
        imgio.write_png_u8(os.path.join(fdir, f"{rec.frame_id}_invalid.png"),
                           np.where(invalid, 255, 0).astype(np.uint8))
    with open(os.path.join(out, "bounds.json"), "w") as fh:
        json.dump(ds.bounds.to_dict(), fh, indent=1)
    _write_run_json(out, args)
    return EXIT_OK


def cmd_synth(args):
    out = _ensure_out(args.out)
    if args.spec:
        with open(args.spec) as fh:
            doc = json.load(fh)
        specs = specs_from_json_doc(doc)
    else:
        specs = default_scene_specs(seed=args.seed, n_scenes=args.scenes,
                                    n_frames=args.frames, image_size=args.size)
    manifest = generate_dataset(specs, out)
    _write_run_json(out, args, {"manifest": os.path.basename(manifest),
                                "scenes": [s.scene_id for s in specs]})
    return EXIT_OK


def _model_config(args):
    if args.config:
        return EgoNetConfig.load(args.config)
    return EgoNetConfig()


def cmd_train(args):
    out = _ensure_out(args.out)
    ds = load_dataset(os.path.join(args.dataset, "manifest.json"))
    mcfg = _model_config(args)
    tcfg = _train_config(args)
    model = build_variant(args.variant, mcfg, seed=args.seed)
    samples = build_samples(ds, ds.scene_ids, mcfg.input_size)
    trace = train_loop(model, samples, tcfg)
    save_checkpoint(os.path.join(out, "model.ckpt"), model.params, mcfg.digest())
    mcfg.save(os.path.join(out, "model_config.txt"))
    with open(os.path.join(out, "train_config.txt"), "w") as fh:
        fh.write(tcfg.to_text())
    write_loss_trace(os.path.join(out, "loss_trace.csv"), trace)
    _write_run_json(out, args, {"final_loss": trace[-1][1] if trace else None})
    return EXIT_OK


def _restore_model(args, mcfg):
    params_data, _ = load_checkpoint(args.checkpoint, mcfg.digest())
    model = build_variant(args.variant, mcfg, seed=args.seed)
    for name, tensor in model.params.items():
        if name not in params_data:
            raise CheckpointError(f"{args.checkpoint}: missing parameter {name!r}")
        if params_data[name].shape != tensor.data.shape:
            raise CheckpointError(f"{args.checkpoint}: parameter {name!r} has shape "
                                  f"{params_data[name].shape}, expected {tensor.data.shape}")
        tensor.data = params_data[name].astype(tensor.data.dtype)
    return model


def _write_prob_maps(out, report):
    for scene, maps in (report.prob_maps or {}).items():
        sdir = os.path.join(out, "maps", scene)
        os.makedirs(sdir, exist_ok=True)
        for i, m in enumerate(maps):
            imgio.write_png_u8(os.path.join(sdir, f"{i:04d}.png"),
                               np.rint(np.clip(m, 0, 1) * 255).astype(np.uint8))


def cmd_eval(args):
    out = _ensure_out(args.out)
    ds = load_dataset(os.path.join(args.dataset, "manifest.json"))
    mcfg = _model_config(args)
    thresholds = np.linspace(0.0, 1.0, args.thresholds)
    splits = leave_one_out_splits(ds.scene_ids)
    if args.baseline:
        factory = baseline_predictor(args.baseline)
    elif args.checkpoint:
        # A fixed checkpoint is scored on every scene without retraining.
        model = _restore_model(args, mcfg)

        def factory(dataset, train_ids, seed):
            return lambda rgb, dhg: model.forward(rgb, dhg)
    else:
        factory = model_predictor(args.variant, mcfg, _train_config(args))
    report = evaluate_dataset(ds, splits, factory, mcfg.input_size,
                              seed=args.seed, thresholds=thresholds)
    metrics.write_report_csv(os.path.join(out, "report.csv"), report)
    metrics.write_curve_csv(os.path.join(out, "curves.csv"), report)
    metrics.write_pr_svg(os.path.join(out, "pr_curves.svg"), report)
    _write_prob_maps(out, report)
    _write_run_json(out, args, {"mean_mf": report.mean_mf, "mean_ap": report.mean_ap})
    return EXIT_OK


def cmd_ablate(args):
    out = _ensure_out(args.out)
    ds = load_dataset(os.path.join(args.dataset, "manifest.json"))
    mcfg = _model_config(args)
    thresholds = np.linspace(0.0, 1.0, args.thresholds)
    results = run_ablation(ds, mcfg, _train_config(args), seed=args.seed,
                           thresholds=thresholds)
    import csv as _csv
    with open(os.path.join(out, "ablation.csv"), "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["variant", "MF", "AP"])
        for kind, report in results.items():
            writer.writerow([kind, repr(report.mean_mf), repr(report.mean_ap)])
        for kind, report in results.items():
            metrics.write_report_csv(os.path.join(out, f"report_{kind}.csv"), report)
    _write_run_json(out, args, {"variants": list(results)})
    return EXIT_OK


def cmd_report(args):
    out = _ensure_out(args.out)
    import csv as _csv
    rows = []
    for name in sorted(os.listdir(args.eval_dir)):
        path = os.path.join(args.eval_dir, name)
        if name.endswith(".csv") and name.startswith(("report", "ablation")):
            with open(path) as fh:
                for row in _csv.reader(fh):
                    rows.append([name] + row)
    if not rows:
        raise DatasetError(f"no report CSVs found under {args.eval_dir}")
    with open(os.path.join(out, "merged.csv"), "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["source", "row", "MF", "AP"])
        for row in rows:
            writer.writerow(row)
    curves = os.path.join(args.eval_dir, "curves.csv")
    if os.path.exists(curves):
        report = _report_from_curve_csv(curves)
        metrics.write_pr_svg(os.path.join(out, "pr_curves.svg"), report)
    _write_run_json(out, args)
    return EXIT_OK


def _report_from_curve_csv(path):
    import csv as _csv
    per_scene = {}
    with open(path) as fh:
        reader = _csv.reader(fh)
        next(reader)
        for scene, t, p, r, tp, fp, fn in reader:
            per_scene.setdefault(scene, []).append((float(t), float(p), float(r),
                                                    int(tp), int(fp), int(fn)))
    curves = {}
    for scene, pts in per_scene.items():
        pts.sort()
        arr = np.array(pts)
        curves[scene] = metrics.PRCurve(thresholds=arr[:, 0], precision=arr[:, 1],
                                        recall=arr[:, 2], tp=arr[:, 3].astype(int),
                                        fp=arr[:, 4].astype(int), fn=arr[:, 5].astype(int))
    rows = [(scene, metrics.max_f_score(c), metrics.average_precision(c))
            for scene, c in curves.items()]
    return metrics.EvalReport(rows=rows, curves=curves)


def build_parser():
    parser = _Parser(prog="egonet", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=True):
        if dataset:
            p.add_argument("--dataset", required=True, help="dataset root directory")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("depth", help="stereo pair to disparity and depth maps")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--calib", required=True, help="calibration key-value file")
    p.add_argument("--max-disp", type=int, default=32)
    p.add_argument("--occlusion-cost", type=float, default=0.04)
    common(p, dataset=False)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("encode", help="write DHG channel images for a dataset")
    common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("synth", help="generate the synthetic dataset")
    p.add_argument("--spec", help="JSON scene spec (defaults to the built-in dataset)")
    p.add_argument("--scenes", type=int, default=4)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--size", type=int, default=64)
    common(p, dataset=False)
    p.set_defaults(func=cmd_synth)

    def train_flags(p):
        p.add_argument("--config", help="model config key-value file")
        p.add_argument("--preset", choices=sorted(PRESETS), default="toy")
        p.add_argument("--iterations", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--variant", choices=["full", "single", "nocoords", "noembed"],
                       default="full")

    p = sub.add_parser("train", help="train on all scenes of a dataset")
    common(p)
    train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="leave-one-out evaluation (model or baseline)")
    common(p)
    train_flags(p)
    p.add_argument("--checkpoint", help="score a fixed checkpoint instead of retraining")
    p.add_argument("--baseline", choices=BASELINES)
    p.add_argument("--thresholds", type=int, default=101, metavar="N",
                   help="number of uniform thresholds")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate all architecture variants")
    common(p)
    train_flags(p)
    p.add_argument("--thresholds", type=int, default=101, metavar="N")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="merge evaluation CSVs and plot PR curves")
    p.add_argument("--eval-dir", required=True)
    common(p, dataset=False)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
