"""Command-line entry points.

Subcommands mirror the offline pipeline stages: `synth` writes a corpus,
`train` / `explain` / `train-predictor` produce the model artifacts,
`simulate` runs samplers over a test set, `report` merges row CSVs, and
`all` drives the whole experiment from one seed.  Flags may be defaulted
from a key=value config file (`#` starts a comment); explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np


def load_config(path) -> dict:
    """key=value lines -> dict of strings; blank lines and # comments skipped."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _corpus(args):
    from .harness import SyntheticSpec, gen_synthetic, load_wav_dir

    if args.data:
        clips, _ = load_wav_dir(args.data)
        return clips
    spec = SyntheticSpec(seed=args.seed)
    return gen_synthetic(spec)


def cmd_synth(args) -> int:
    from .harness import SyntheticSpec, gen_synthetic, save_corpus_wav

    spec = SyntheticSpec(
        n_classes=args.classes, clips_per_class=args.clips_per_class,
        seed=args.seed,
    )
    clips = gen_synthetic(spec)
    save_corpus_wav(clips, args.out)
    print(f"wrote {len(clips)} clips under {args.out}")
    return 0


def cmd_train(args) -> int:
    from .classifier import TrainConfig, save_classifier, train_classifier
    from .harness import load_wav_dir

    clips, names = load_wav_dir(args.data)
    cfg = TrainConfig(epochs=args.epochs, lr=args.lr, batch=args.batch,
                      augment_prob=args.augment_prob, seed=args.seed)
    model, stats = train_classifier(clips, cfg)
    save_classifier(args.out, model)
    print(f"classes: {','.join(names)}")
    print(f"train accuracy: {stats['train_accuracy']:.4f}")
    print(f"model written to {args.out}")
    return 0


def cmd_explain(args) -> int:
    from .classifier import load_classifier
    from .explainer import (aggregate_global, fit_local, write_global_csv,
                            write_importances_csv)
    from .harness import load_wav_dir

    clips, _ = load_wav_dir(args.data)
    model = load_classifier(args.model)
    ivs = [
        fit_local(clip, model, n_aug=args.n_aug, keep_prob=args.keep_prob,
                  lam=args.ridge_lambda, seed=args.seed + k)
        for k, clip in enumerate(clips)
    ]
    write_importances_csv(args.out, ivs)
    if args.global_out:
        write_global_csv(args.global_out, aggregate_global(ivs))
    if args.tau_out:
        scores = np.concatenate([iv.scores for iv in ivs])
        tau = float(np.percentile(scores, args.tau_percentile))
        Path(args.tau_out).write_text(f"tau={tau!r}\n")
    print(f"explained {len(ivs)} clips -> {args.out}")
    return 0


def cmd_train_predictor(args) -> int:
    from .audio_core import analyze_clip, segment_features
    from .classifier import load_classifier
    from .explainer import read_importances_csv
    from .harness import load_wav_dir
    from .predictor import build_dataset, save_predictor, train_predictor

    clips, _ = load_wav_dir(args.data)
    model = load_classifier(args.model)
    by_id = {iv.clip_id: iv for iv in read_importances_csv(args.importances)}
    usable = [c for c in clips if c.clip_id in by_id]
    ivs = [by_id[c.clip_id] for c in usable]
    feats = []
    for clip in usable:
        mel, view = analyze_clip(clip)
        feats.append(segment_features(mel, view, model.conv1_w, model.conv1_b))
    ds = build_dataset(usable, ivs, feats)
    predictor, loss = train_predictor(ds, epochs=args.epochs, lr=args.lr,
                                      batch=args.batch, hidden=args.hidden,
                                      seed=args.seed)
    save_predictor(args.out, predictor)
    print(f"trained on {len(ds)} examples, final loss {loss:.6f} -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    from .classifier import load_classifier
    from .explainer import read_global_csv
    from .harness import (ExperimentConfig, ResultRow, informative_recall,
                          load_wav_dir, report)
    from .audio_core import analyze_clip
    from .classifier import predict_batch
    from .energy_model import make_state
    from .explainer import fit_local
    from .harness import BASELINE_SAMPLERS
    from .imputation import impute
    from .predictor import load_predictor
    from .scheduler import Models, SchedulerConfig, run_soundsieve

    clips, _ = load_wav_dir(args.data)
    model = load_classifier(args.model)
    predictor = load_predictor(args.predictor) if args.predictor else None
    global_imp = read_global_csv(args.global_csv) if args.global_csv else None
    tau = args.tau
    if args.scheduler_config:
        cfg_map = load_config(args.scheduler_config)
        if "tau" in cfg_map:
            tau = float(cfg_map["tau"])
    labels = np.array([c.label for c in clips])
    state0 = make_state(args.capacity, args.C)
    rows = []
    preds = np.empty(len(clips), dtype=np.int64)
    recalls, sensed = [], []
    sched = None
    if args.sampler == "soundsieve":
        if predictor is None or global_imp is None:
            raise ValueError("soundsieve needs --predictor and --global-csv")
        sched = (Models(model, predictor, global_imp),
                 SchedulerConfig(tau=tau, t_idle_max=args.t_idle_max))
    for idx, clip in enumerate(clips):
        mel, view = analyze_clip(clip)
        if args.sampler == "soundsieve":
            trace, label, _ = run_soundsieve(clip, sched[0], state0, sched[1])
            preds[idx] = label
        else:
            trace = BASELINE_SAMPLERS[args.sampler](view.n_segments, state0)
            mask = trace.mask
            spec = impute(mel, mask, view) if not mask.all() else mel
            preds[idx] = predict_batch(model, [spec])[0]
        sensed.append(trace.sensed_fraction)
        iv = fit_local(clip, model, seed=args.seed + idx)
        r = informative_recall(trace, iv, state0)
        if r is not None:
            recalls.append(r)
    rows.append(ResultRow(args.dataset, args.sampler, float(args.C),
                          float(np.mean(preds == labels)),
                          float(np.mean(recalls)) if recalls else 0.0,
                          float(np.mean(sensed)), len(clips), args.seed))
    report(rows, args.out)
    print(f"wrote {len(rows)} row(s) -> {args.out}")
    return 0


def cmd_report(args) -> int:
    from .harness import read_report, report

    rows = []
    for path in args.inputs:
        rows.extend(read_report(path))
    report(rows, args.out)
    print(f"merged {len(rows)} rows -> {args.out}")
    return 0


def cmd_all(args) -> int:
    from .classifier import TrainConfig, save_classifier
    from .explainer import write_global_csv, write_importances_csv
    from .harness import ExperimentConfig, SyntheticSpec, report, run_experiment
    from .predictor import save_predictor

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = ExperimentConfig(
        synth=SyntheticSpec(clips_per_class=args.clips_per_class),
        capacity=args.capacity,
        train=TrainConfig(epochs=args.epochs, augment_prob=args.augment_prob),
        n_aug=args.n_aug,
        seed=args.seed,
    )
    rows, bundle = run_experiment(config)
    report(rows, out / "report.csv")
    save_classifier(out / "classifier.txt", bundle.classifier)
    save_predictor(out / "predictor.txt", bundle.predictor)
    write_importances_csv(out / "importances.csv", bundle.train_importances)
    write_global_csv(out / "global.csv", bundle.global_importance)
    (out / "scheduler.cfg").write_text(
        f"tau={bundle.tau!r}\nt_idle_max={config.t_idle_max}\n"
        f"capacity={config.capacity}\n"
    )
    for row in rows:
        print(f"{row.sampler:>10s}  C={row.C:<4g} accuracy={row.accuracy:.3f} "
              f"recall={row.recall:.3f} sensed={row.sensed_fraction:.3f}")
    print(f"report -> {out / 'report.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soundsieve",
        description="Content-aware audio sampling for intermittently powered sensors",
    )
    parser.add_argument("--config", help="key=value file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommand_parsers = []  # set_defaults on the parent skips these

    def add_parser(*args, **kwargs):
        p = sub.add_parser(*args, **kwargs)
        parser.subcommand_parsers.append(p)
        return p

    p = add_parser("synth", help="generate the synthetic WAV corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--clips-per-class", type=int, default=125)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = add_parser("train", help="train the classifier on a WAV directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--augment-prob", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = add_parser("explain", help="compute per-segment importance scores")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--global-out")
    p.add_argument("--tau-out")
    p.add_argument("--tau-percentile", type=float, default=70.0)
    p.add_argument("--n-aug", type=int, default=256)
    p.add_argument("--keep-prob", type=float, default=0.5)
    p.add_argument("--ridge-lambda", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_explain)

    p = add_parser("train-predictor", help="train the importance predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--importances", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_predictor)

    p = add_parser("simulate", help="run one sampler over a WAV test set")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--predictor")
    p.add_argument("--global-csv")
    p.add_argument("--scheduler-config")
    p.add_argument("--sampler", required=True,
                   choices=["soundsieve", "vanilla", "periodic", "cis1"])
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--capacity", type=int, default=5)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--t-idle-max", type=int, default=2)
    p.add_argument("--dataset", default="wavdir")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = add_parser("report", help="merge and canonically order row CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = add_parser("all", help="full pipeline: corpus, models, sweep, report")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clips-per-class", type=int, default=125)
    p.add_argument("--capacity", type=int, default=5)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--augment-prob", type=float, default=0.5)
    p.add_argument("--n-aug", type=int, default=256)
    p.set_defaults(func=cmd_all)

    return parser


def _coerce(value: str):
    # config files carry untyped strings; argparse types only apply to flags
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # a config file supplies defaults; explicit flags still win
    probe, _ = parser.parse_known_args(argv)
    if getattr(probe, "config", None):
        defaults = {k: _coerce(v) for k, v in load_config(probe.config).items()}
        parser.set_defaults(**defaults)
        for sub_parser in parser.subcommand_parsers:
            sub_parser.set_defaults(**defaults)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI contract: nonzero exit with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
