"""Command-line interface: data synthesis, training, evaluation, prediction,
FLOP/latency sweeps, the LLM-baseline harness, and dataset validation.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import baseline as baseline_mod
from . import data as data_mod
from .metrics import MetricsError, classification_report, regression_report
from .model import (
    CheckpointError,
    GestureModel,
    ModelConfig,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .profiling import TABLE1_SWEEP, bench_latency, count_flops, sweep_csv_header, sweep_csv_row
from .training import TrainConfig, TrainingError, train

# Decision rule applied to the sigmoid output at inference time. This is a
# separate constant from data.BINARIZATION_THRESHOLD, which converts
# annotated intensities into training labels.
DECISION_THRESHOLD = 0.5

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--sa", type=int, default=None, help="self-attention blocks per layer")
    p.add_argument("--latents", type=int, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--cross-heads", type=int, default=None)
    p.add_argument("--sa-heads", type=int, default=None)
    p.add_argument("--ffn-mult", type=int, default=None)
    p.add_argument("--bands", type=int, default=None, help="Fourier frequency bands")
    p.add_argument("--max-freq", type=float, default=None)
    p.add_argument("--source-dim", type=int, default=None)
    p.add_argument("--token-layout", choices=["scalar", "pair"], default=None)


_MODEL_KEYS = {
    "depth": "depth",
    "sa": "sa_blocks",
    "latents": "num_latents",
    "latent_dim": "latent_dim",
    "cross_heads": "cross_heads",
    "sa_heads": "sa_heads",
    "ffn_mult": "ffn_mult",
    "bands": "fourier_bands",
    "max_freq": "max_freq",
    "source_dim": "source_dim",
    "token_layout": "token_layout",
}

_TRAIN_KEYS = ("lr", "batch_size", "epochs", "seed", "pos_weight")


def _load_file_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise UsageError("--config file must contain a JSON object")
    return cfg


def _merged(args: argparse.Namespace, file_cfg: dict, arg_name: str, cfg_key: str):
    flag = getattr(args, arg_name, None)
    return flag if flag is not None else file_cfg.get(cfg_key)


def _build_model_config(args, file_cfg: dict, task: str | None = None) -> ModelConfig:
    kwargs = {}
    for arg_name, cfg_key in _MODEL_KEYS.items():
        v = _merged(args, file_cfg, arg_name, cfg_key)
        if v is not None:
            kwargs[cfg_key] = v
    if task is not None:
        kwargs["task"] = task
    try:
        return ModelConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid model configuration: {exc}") from exc


def _parse_sweep(text: str) -> list[tuple[int, int]]:
    configs = []
    for part in text.split(","):
        try:
            depth, sa = part.strip().split(":")
            configs.append((int(depth), int(sa)))
        except ValueError as exc:
            raise UsageError(f"bad sweep entry {part!r}; expected depth:sa") from exc
    return configs


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        print(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, lexicon = data_mod.synthetic_provider(
        args.seed, args.n, positive_rate=args.positive_rate, max_words=args.max_words
    )
    data_mod.save_dataset(records, out / "dataset.jsonl")
    data_mod.save_lexicon(lexicon, out / "lexicon.json")
    print(f"wrote {len(records)} records to {out / 'dataset.jsonl'}")
    return EXIT_OK


def _load_records_and_samples(data_path, lexicon_path):
    records = data_mod.load_dataset(data_path)
    lexicon = data_mod.load_lexicon(lexicon_path)
    return records, lexicon


def cmd_train(args) -> int:
    file_cfg = _load_file_config(args.config)
    records, lexicon = _load_records_and_samples(args.data, args.lexicon)

    tkwargs = {}
    for key in _TRAIN_KEYS:
        v = _merged(args, file_cfg, key, key)
        if v is not None:
            tkwargs[key] = v
    try:
        tcfg = TrainConfig(**tkwargs)
    except ValueError as exc:
        raise UsageError(f"invalid training configuration: {exc}") from exc

    start_step = 0
    if args.resume:
        params, config, meta = load_checkpoint(args.resume)
        start_step = int(meta.get("global_step", 0))
        if args.task and args.task != config.task:
            raise UsageError(
                f"--task {args.task} conflicts with checkpoint task {config.task}"
            )
    else:
        if not args.task:
            raise UsageError("--task is required unless resuming from a checkpoint")
        config = _build_model_config(args, file_cfg, task=args.task)
        params = None

    if args.no_split:
        train_records, eval_records = records, []
    else:
        train_records, eval_records = data_mod.split_80_20(records, args.split_seed)
    train_samples = data_mod.expand_records(train_records, lexicon)
    eval_samples = data_mod.expand_records(eval_records, lexicon)

    result = train(config, params, train_samples, eval_samples, tcfg, start_step=start_step)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / f"{config.task}.ckpt"
    save_checkpoint(result.params, config, ckpt_path, meta={"global_step": result.global_step})
    (out / "history.csv").write_text(result.history.to_csv(), encoding="utf-8")
    effective = {
        "model": dataclasses.asdict(config),
        "train": dataclasses.asdict(tcfg),
        "data": str(args.data),
        "lexicon": str(args.lexicon),
        "split_seed": args.split_seed,
        "no_split": bool(args.no_split),
        "global_step": result.global_step,
    }
    (out / "config.json").write_text(json.dumps(effective, indent=2, sort_keys=True), encoding="utf-8")
    final = result.history.epochs[-1].train_loss if result.history.epochs else float("nan")
    print(f"trained {config.task} for {len(result.history.epochs)} epochs "
          f"(final train loss {final:.6g}); checkpoint: {ckpt_path}")
    return EXIT_OK


def _select_split(records, which: str, seed: int):
    if which == "all":
        return records
    train_recs, test_recs = data_mod.split_80_20(records, seed)
    return train_recs if which == "train" else test_recs


def cmd_eval(args) -> int:
    params, config, _meta = load_checkpoint(args.checkpoint)
    if args.task and args.task != config.task:
        raise UsageError(f"--task {args.task} conflicts with checkpoint task {config.task}")
    records, lexicon = _load_records_and_samples(args.data, args.lexicon)
    records = _select_split(records, args.split, args.split_seed)
    samples = data_mod.expand_records(records, lexicon)
    if not samples:
        raise data_mod.DatasetError("selected split contains no samples")

    model = GestureModel(config, params)
    outputs = [model.forward(s.h_s, s.e_n)[1] for s in samples]
    if config.task == "placement":
        preds = [1 if o >= DECISION_THRESHOLD else 0 for o in outputs]
        labels = [s.label for s in samples]
        report = classification_report(preds, labels, mode=args.avg)
    else:
        report = regression_report(outputs, [s.intensity for s in samples])
    _write_or_print(report.to_json(), args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    if not args.placement_checkpoint and not args.intensity_checkpoint:
        raise UsageError("provide --placement-checkpoint and/or --intensity-checkpoint")
    models = {}
    for task, path in (
        ("placement", args.placement_checkpoint),
        ("intensity", args.intensity_checkpoint),
    ):
        if path:
            params, config, _ = load_checkpoint(path)
            if config.task != task:
                raise UsageError(f"checkpoint {path} has task {config.task!r}, expected {task!r}")
            models[task] = GestureModel(config, params)

    records = data_mod.load_dataset(args.data, require_intensity=False)
    lexicon = data_mod.load_lexicon(args.lexicon)
    if args.record_id:
        records = [r for r in records if r.id == args.record_id]
        if not records:
            raise data_mod.DatasetError(f"record id {args.record_id!r} not found")

    out_records = []
    for rec in records:
        emotion = data_mod.normalize_emotion(args.emotion) if args.emotion else rec.emotion
        e_emo = lexicon[emotion]
        rows = []
        for n, word in enumerate(rec.words):
            e_n = data_mod.fuse_emotion(word.e_w, e_emo)
            row = {"word_index": n, "placement_prob": None, "placement": None, "intensity": None}
            if "placement" in models:
                prob = models["placement"].forward(rec.h_s, e_n)[1]
                row["placement_prob"] = prob
                row["placement"] = 1 if prob >= DECISION_THRESHOLD else 0
            if "intensity" in models:
                row["intensity"] = models["intensity"].forward(rec.h_s, e_n)[1]
            rows.append(row)
        out_records.append({"record_id": rec.id, "emotion": emotion, "words": rows})
    _write_or_print(json.dumps(out_records, indent=2), args.out)
    return EXIT_OK


def cmd_flops(args) -> int:
    file_cfg = _load_file_config(args.config)
    sweep = _parse_sweep(args.sweep) if args.sweep else list(TABLE1_SWEEP)
    lines = [sweep_csv_header()]
    for depth, sa in sweep:
        args.depth, args.sa = depth, sa
        config = _build_model_config(args, file_cfg)
        lines.append(sweep_csv_row(count_flops(config)))
    _write_or_print("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    file_cfg = _load_file_config(args.config)
    rng = np.random.default_rng(args.seed or 0)
    lines = [sweep_csv_header()]

    def bench_one(config, params):
        sample = (rng.standard_normal(config.sentence_dim), rng.standard_normal(config.word_dim))
        latency = bench_latency(params, config, sample, args.iterations, args.warmup)
        lines.append(sweep_csv_row(count_flops(config), latency))

    if args.checkpoint:
        params, config, _ = load_checkpoint(args.checkpoint)
        bench_one(config, params)
    else:
        sweep = _parse_sweep(args.sweep) if args.sweep else list(TABLE1_SWEEP)
        for depth, sa in sweep:
            args.depth, args.sa = depth, sa
            config = _build_model_config(args, file_cfg)
            bench_one(config, init_params(config, args.seed or 0))
    _write_or_print("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_baseline(args) -> int:
    records, _lexicon = _load_records_and_samples(args.data, args.lexicon)
    config = baseline_mod.BaselineConfig(
        endpoint=args.endpoint, model=args.model_id, temperature=args.temperature
    )
    if args.mock == "identity":
        by_id = {r.id: [w.intensity for w in r.words] for r in records}

        def transport(payload):
            prompt = payload["messages"][0]["content"]
            rec = next(r for r in records if baseline_mod.build_prompt(r) == prompt)
            return {"choices": [{"message": {"content": json.dumps(by_id[rec.id])}}]}
    elif args.mock == "zeros":
        def transport(payload):
            prompt = payload["messages"][0]["content"]
            rec = next(r for r in records if baseline_mod.build_prompt(r) == prompt)
            return {"choices": [{"message": {"content": json.dumps([0.0] * len(rec.words))}}]}
    else:
        transport = baseline_mod.LiveTransport(config)

    result = baseline_mod.evaluate_baseline(records, config, transport)
    if args.archive:
        with open(args.archive, "w", encoding="utf-8") as f:
            for r in result.results:
                f.write(r.to_json() + "\n")
    summary = {
        "records_evaluated": result.records_evaluated,
        "records_failed": result.records_failed,
        "classification": json.loads(result.classification.to_json()),
        "regression": json.loads(result.regression.to_json()),
    }
    _write_or_print(json.dumps(summary, indent=2), args.out)
    return EXIT_OK


def cmd_validate_data(args) -> int:
    records = data_mod.load_dataset(args.data)
    n_words = sum(len(r.words) for r in records)
    msg = f"dataset OK: {len(records)} records, {n_words} words"
    if args.lexicon:
        lexicon = data_mod.load_lexicon(args.lexicon)
        samples = data_mod.expand_records(records, lexicon)
        msg += f", {len(samples)} expanded samples, lexicon OK"
    print(msg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="icogest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a deterministic synthetic dataset + lexicon")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--positive-rate", type=float, default=0.15)
    p.add_argument("--max-words", type=int, default=data_mod.MAX_WORDS)
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("train", help="train a placement or intensity model")
    p.add_argument("--config", default=None, help="JSON config file; flags override")
    p.add_argument("--data", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--task", choices=["placement", "intensity"], default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue training from")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--pos-weight", type=float, dest="pos_weight", default=None)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--no-split", action="store_true", help="train on all records (no eval split)")
    _model_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--task", choices=["placement", "intensity"], default=None)
    p.add_argument("--split", choices=["all", "train", "test"], default="all")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--avg", choices=["macro", "weighted"], default="macro")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="per-word placement/intensity for records")
    p.add_argument("--placement-checkpoint", default=None)
    p.add_argument("--intensity-checkpoint", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--record-id", default=None)
    p.add_argument("--emotion", default=None, help="override the record's emotion")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("flops", help="analytic FLOP counts for a config sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--sweep", default=None, help='e.g. "2:8,1:1" (default: the 8-config table)')
    p.add_argument("--out", default=None)
    _model_flags(p)
    p.set_defaults(fn=cmd_flops)

    p = sub.add_parser("bench", help="wall-clock latency for a checkpoint or sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--sweep", default=None)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _model_flags(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("baseline", help="run the LLM baseline (live or mock transport)")
    p.add_argument("--data", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--mock", choices=["identity", "zeros"], default=None,
                   help="offline transport instead of live HTTP")
    p.add_argument("--endpoint", default="https://api.openai.com/v1/chat/completions")
    p.add_argument("--model-id", default="gpt-4o")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--archive", default=None, help="JSONL file for per-record raw results")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("validate-data", help="validate a dataset (and optionally a lexicon)")
    p.add_argument("--data", required=True)
    p.add_argument("--lexicon", default=None)
    p.set_defaults(fn=cmd_validate_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (data_mod.DatasetError, MetricsError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CheckpointError, TrainingError, baseline_mod.BaselineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
