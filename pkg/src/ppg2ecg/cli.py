"""Command-line front end: ``ppg2ecg <command> [options]``.

Exit codes: 0 success, 1 user error (bad input, missing file), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ck
from .compression import compress_and_finetune, finetune_config
from .evaluation import evaluate_model, evaluate_predictions, predict
from .interpretation import DEFAULT_STEPS, diagnosis_attribution, ecg_attribution_heatmap
from .network import CYCLE_LENGTH, ModelParams, full_architecture, tiny_architecture, without_diagnosis
from .training import TrainConfig, train_semisupervised, train_supervised
from .waveform_prep import (
    load_record,
    preprocess_record,
    read_dataset,
    synthesize_dataset,
    synthesize_record,
    write_dataset,
    write_record_csv,
)


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


TRAIN_FLAGS = {
    "epochs": int,
    "batch_size": int,
    "lr_initial": float,
    "lr_after": float,
    "lr_drop_epoch": int,
    "lambda_d": float,
    "lambda_s": float,
    "lambda_c": float,
}


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    for name, typ in TRAIN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)


def _train_config(args, base: TrainConfig | None = None) -> TrainConfig:
    opts = args.config.get("train", {}) if args.config else {}
    if not isinstance(opts, dict):
        raise UserError("config 'train' section must be a JSON object")
    cfg = TrainConfig.from_dict({**(base or TrainConfig()).to_dict(), **opts})
    flags = {k: getattr(args, k) for k in TRAIN_FLAGS if getattr(args, k, None) is not None}
    return replace(cfg, **flags, seed=args.seed)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_data(path, what="dataset"):
    if path is None:
        return []
    p = Path(path)
    if not p.is_file():
        raise UserError(f"{what} not found: {p}")
    data = read_dataset(p)
    if not data:
        raise UserError(f"{what} {p} holds no cycles")
    return data


def _arch_for(args, length: int, diagnosis: bool = True):
    if args.arch == "tiny":
        return tiny_architecture(length, diagnosis)
    if length != CYCLE_LENGTH:
        raise UserError(f"the full architecture needs cycles of length {CYCLE_LENGTH}, got {length}")
    return full_architecture(length, diagnosis)


def _progress(args):
    if args.quiet:
        return None
    return lambda rec: print(f"epoch {rec['epoch']:3d}  loss {rec['loss_total']:.5f}  lr {rec['lr']:.1e}", flush=True)


# ----------------------------------------------------------------------------
# commands


def cmd_preprocess(args) -> int:
    out = _out(args)
    all_cycles, drops_total = [], {}
    for path in args.inputs:
        try:
            rec = load_record(path, label=args.label)
        except (FileNotFoundError, ValueError) as exc:
            raise UserError(str(exc)) from exc
        try:
            cycles, drops = preprocess_record(rec, args.length, args.cutoff, args.ppg_only)
        except ValueError as exc:
            raise UserError(f"{path}: {exc}") from exc
        print(f"{path}: {len(cycles)} cycles" + "".join(f", {k}={v}" for k, v in sorted(drops.items())))
        all_cycles += cycles
        for k, v in drops.items():
            drops_total[k] = drops_total.get(k, 0) + v
    if not all_cycles:
        raise UserError("no cycles survived preprocessing")
    write_dataset(out / args.name, all_cycles)
    summary = {"cycles": len(all_cycles), "dropped": drops_total, "inputs": [Path(p).name for p in args.inputs]}
    _write_json(out / "preprocess_report.json", summary)
    print(f"wrote {len(all_cycles)} cycles to {out / args.name}")
    return 0


def cmd_synth(args) -> int:
    out = _out(args)
    if args.record:
        durations = [args.cycle_seconds] * args.record
        sr = synthesize_record(durations, cls=args.cls, seed=args.seed, trend=args.trend)
        write_record_csv(out / args.name, sr.record)
        print(f"wrote {args.record}-cycle record to {out / args.name}")
        return 0
    data = synthesize_dataset(args.subjects, args.cycles, args.classes, args.seed, args.length)
    write_dataset(out / args.name, data)
    print(f"wrote {len(data)} cycles to {out / args.name}")
    return 0


def _report(model, data, path: Path, extra: dict | None = None) -> dict:
    rep = evaluate_model(model, data).to_dict()
    if extra:
        rep.update(extra)
    _write_json(path, rep)
    return rep


def cmd_train(args) -> int:
    out = _out(args)
    data = _load_data(args.data)
    cfg = _train_config(args)
    model = ModelParams.initialize(_arch_for(args, data[0].length), cfg.seed)
    res = train_supervised(data, cfg, model, log=out / "train_log.jsonl", progress=_progress(args))
    ck.save_checkpoint(out / "model.ckpt", ck.Checkpoint(res.model, cfg.to_dict(), cfg.seed))
    test = _load_data(args.test, "test set") if args.test else data
    rep = _report(res.model, test, out / "report.json", {"final_epoch": res.history[-1] if res.history else None})
    print(json.dumps(rep["fidelity"], sort_keys=True))
    return 0


def cmd_train_semi(args) -> int:
    out = _out(args)
    paired = _load_data(args.paired, "paired set")
    u_ppg = _load_data(args.unpaired_ppg, "unpaired PPG set")
    u_ecg = _load_data(args.unpaired_ecg, "unpaired ECG set")
    if any(c.ecg is None for c in u_ecg):
        raise UserError("unpaired ECG set has cycles without ECG")
    cfg = _train_config(args)
    arch = _arch_for(args, paired[0].length)
    g_pe = ModelParams.initialize(arch, cfg.seed)
    g_ep = ModelParams.initialize(without_diagnosis(arch), np.random.default_rng([cfg.seed, 2]))
    res = train_semisupervised(
        paired, u_ppg, u_ecg, cfg, g_pe, g_ep, log=out / "train_log.jsonl", progress=_progress(args)
    )
    ck.save_checkpoint(out / "model.ckpt", ck.Checkpoint(res.model_pe, cfg.to_dict(), cfg.seed))
    ck.save_checkpoint(out / "model_ecg2ppg.ckpt", ck.Checkpoint(res.model_ep, cfg.to_dict(), cfg.seed))
    test = _load_data(args.test, "test set") if args.test else paired
    rep = _report(res.model_pe, test, out / "report.json", {"final_epoch": res.history[-1] if res.history else None})
    print(json.dumps(rep["fidelity"], sort_keys=True))
    return 0


def cmd_compress(args) -> int:
    out = _out(args)
    model = ck.load_checkpoint(args.checkpoint).model
    if model.variant != "full":
        raise UserError(f"compress expects a full model, got variant {model.variant!r}")
    data = _load_data(args.data)
    cfg = _train_config(args, finetune_config())
    res = compress_and_finetune(model, data, cfg, lambda_w=args.lambda_w, log=out / "train_log.jsonl", progress=_progress(args))
    ck.save_checkpoint(out / "model.ckpt", ck.Checkpoint(res.model, cfg.to_dict(), cfg.seed))
    (out / "significance.json").write_text(res.report.to_json() + "\n")
    extra = {
        "compression": {
            "params_full": res.params_full,
            "params_compressed": res.params_compressed,
            "reduction": res.reduction,
        }
    }
    test = _load_data(args.test, "test set") if args.test else data
    _report(res.model, test, out / "report.json", extra)
    print(f"parameters {res.params_full} -> {res.params_compressed} ({100 * res.reduction:.1f}% fewer)")
    return 0


def cmd_infer(args) -> int:
    out = _out(args)
    model = ck.load_checkpoint(args.checkpoint).model
    data = _load_data(args.data)
    ecg_hat, probs = predict(model, np.stack([c.ppg for c in data]))
    with (out / "predictions.jsonl").open("w") as fh:
        for i, c in enumerate(data):
            rec = {"source": c.source, "ecg_hat": ecg_hat[i].tolist()}
            if probs is not None:
                rec["class_probs"] = probs[i].tolist()
                rec["predicted_class"] = int(np.argmax(probs[i]))
            fh.write(json.dumps(rec) + "\n")
    print(f"wrote {len(data)} predictions to {out / 'predictions.jsonl'}")
    return 0


def cmd_explain(args) -> int:
    out = _out(args)
    model = ck.load_checkpoint(args.checkpoint).model
    data = _load_data(args.data)
    if not 0 <= args.index < len(data):
        raise UserError(f"cycle index {args.index} outside [0, {len(data)})")
    p = data[args.index].ppg
    summary = {"index": args.index, "steps": args.steps}
    if not args.skip_heatmap:
        amap = ecg_attribution_heatmap(model, p, args.steps, out / "heatmap")
        summary["ecg_max_relative_gap"] = float(amap.relative_gap().max())
    if model.arch.has_diagnosis:
        disease = args.disease
        if disease is None:
            disease = int(np.argmax(predict(model, p[None])[1][0]))
        hl = diagnosis_attribution(model, p, disease, args.top_fraction, args.steps)
        (out / "highlight.json").write_text(hl.to_json() + "\n")
        summary.update(disease=disease, highlighted=len(hl.indices))
    _write_json(out / "explain_report.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    out = _out(args)
    data = _load_data(args.data)
    if args.oracle:
        if any(c.ecg is None for c in data):
            raise UserError("oracle evaluation needs paired cycles")
        ecg = np.stack([c.ecg for c in data])
        labels = [c.label for c in data]
        if all(lab is not None for lab in labels):
            labels = np.asarray(labels)
            probs = np.eye(int(labels.max()) + 1)[labels]
            rep = evaluate_predictions(ecg, ecg, probs, labels, variant="oracle")
        else:
            rep = evaluate_predictions(ecg, ecg, variant="oracle")
    else:
        if not args.checkpoint:
            raise UserError("eval needs --checkpoint or --oracle")
        rep = evaluate_model(ck.load_checkpoint(args.checkpoint).model, data)
    (out / "report.json").write_text(rep.to_json() + "\n")
    print(json.dumps(rep.to_dict()["fidelity"], sort_keys=True))
    return 0


# ----------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0 or the config value)")
    common.add_argument("--config", type=Path, default=None, help="JSON file with a 'train' section of overrides")
    common.add_argument("--out", default=None, help="output directory (default '.')")
    common.add_argument("--quiet", action="store_true")

    parser = _Parser(prog="ppg2ecg", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common], help="CSV recordings -> cycle dataset")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--name", default="dataset.jsonl")
    p.add_argument("--length", type=int, default=CYCLE_LENGTH)
    p.add_argument("--cutoff", type=float, default=0.5, help="detrending cutoff in Hz")
    p.add_argument("--label", type=int, default=None)
    p.add_argument("--ppg-only", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", parents=[common], help="synthetic cycle dataset or raw record")
    p.add_argument("--subjects", type=int, default=100)
    p.add_argument("--cycles", type=int, default=20)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--length", type=int, default=CYCLE_LENGTH)
    p.add_argument("--name", default="dataset.jsonl")
    p.add_argument("--record", type=int, default=0, help="write a raw CSV record with this many cycles instead")
    p.add_argument("--cycle-seconds", type=float, default=0.8)
    p.add_argument("--cls", type=int, default=0)
    p.add_argument("--trend", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    for name, func, helptext in (
        ("train", cmd_train, "supervised training"),
        ("train-semi", cmd_train_semi, "semi-supervised training with unpaired data"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "train":
            p.add_argument("--data", required=True)
        else:
            p.add_argument("--paired", required=True)
            p.add_argument("--unpaired-ppg", default=None)
            p.add_argument("--unpaired-ecg", default=None)
        p.add_argument("--test", default=None)
        p.add_argument("--arch", choices=("full", "tiny"), default="full")
        _add_train_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("compress", parents=[common], help="prune, swap in recursive modules, fine-tune")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--lambda-w", type=float, default=1.0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("infer", parents=[common], help="ECG and class probabilities for PPG cycles")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("explain", parents=[common], help="integrated-gradients attribution for one cycle")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--disease", type=int, default=None)
    p.add_argument("--top-fraction", type=float, default=0.2)
    p.add_argument("--skip-heatmap", action="store_true")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", parents=[common], help="fidelity and diagnosis report")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--oracle", action="store_true", help="score the reference ECG against itself")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def _finalize(args) -> None:
    cfg = {}
    if args.config is not None:
        if not args.config.is_file():
            raise UserError(f"config file not found: {args.config}")
        try:
            cfg = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise UserError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UserError("config file must hold a JSON object")
    args.config = cfg
    if args.seed is None:
        args.seed = int(cfg.get("seed", 0))
    if args.out is None:
        args.out = cfg.get("out", ".")


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _finalize(args)
        return args.func(args)
    except (UserError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # pragma: no cover - defensive
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
