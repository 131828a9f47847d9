"""Command-line entry points for the pipeline stages."""

from __future__ import annotations

import argparse
import os
import sys

from .pipeline import (
    PipelineError,
    run_detect,
    run_eval,
    run_feature,
    run_ingest,
    run_investigate,
    run_pretrain,
    run_synth,
    run_train,
)
from .runconfig import SEED_ENV_VAR, RunConfig


def _load_config(path: str | None) -> RunConfig:
    if path:
        return RunConfig.load(path)
    cfg = RunConfig()
    if os.environ.get(SEED_ENV_VAR):
        cfg.seed = int(os.environ[SEED_ENV_VAR])
    return cfg


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="provsentry",
                                  description="provenance-graph intrusion "
                                              "detection pipeline")
    sub = top.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic event log")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mimicry", type=int, default=None,
                   help="benign decoration events to inject into the test log")

    p = sub.add_parser("ingest", help="parse audit logs into a provenance graph")
    p.add_argument("--format", choices=["jsonl", "streamspot"], default="jsonl")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dedup-window", type=int, default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("feature", help="train token embeddings; fix spectral dims")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None, help="positional dims")
    p.add_argument("--dsem", type=int, default=None, help="semantic dims")
    p.add_argument("--config", default=None)

    p = sub.add_parser("pretrain", help="pre-train the graph encoder")
    p.add_argument("--graph", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--events", default=None,
                   help="labeled event file restricting supervision to "
                        "train-phase nodes")
    p.add_argument("--config", default=None)

    p = sub.add_parser("train", help="train the intent stack and action head "
                                     "(benign data only)")
    p.add_argument("--graph", required=True)
    p.add_argument("--pretrain", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--events", default=None,
                   help="labeled event file for the benign-only guard")
    p.add_argument("--config", default=None)

    p = sub.add_parser("detect", help="score behaviors and emit verdicts")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("investigate", help="cluster flagged behaviors into an "
                                           "alert graph")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output base path (.dot/.json)")
    p.add_argument("--config", default=None)

    p = sub.add_parser("eval", help="compare verdicts against ground truth")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "synth":
            cfg = _load_config(args.config)
            if args.mimicry is not None:
                cfg.mimicry_events = args.mimicry
            info = run_synth(cfg, args.out)
            print(f"wrote {info['n_events']} events "
                  f"({info['n_train']} train-phase, {info['n_test']} "
                  f"test-phase) under {args.out}")
        elif args.cmd == "ingest":
            cfg = _load_config(args.config)
            window = cfg.dedup_window if args.dedup_window is None else args.dedup_window
            stats = run_ingest(args.input, args.out, fmt=args.format,
                               dedup_window=window)
            print(f"parsed {stats.parsed} events "
                  f"({stats.skipped} skipped) -> {args.out}")
        elif args.cmd == "feature":
            cfg = _load_config(args.config)
            if args.k is not None:
                cfg.k_pos = args.k
            if args.dsem is not None:
                cfg.d_sem = args.dsem
            info = run_feature(args.graph, args.out, cfg)
            print(f"vocabulary of {info['vocab_size']} tokens -> {args.out}")
        elif args.cmd == "pretrain":
            cfg = _load_config(args.config)
            info = run_pretrain(args.graph, args.features, args.out, cfg,
                                epochs=args.epochs, seed=args.seed,
                                events_path=args.events)
            print(f"pretraining loss {info['losses'][0]:.4f} -> "
                  f"{info['losses'][-1]:.4f} over {len(info['losses'])} epochs")
        elif args.cmd == "train":
            cfg = _load_config(args.config)
            info = run_train(args.graph, args.pretrain, args.out, cfg,
                             epochs=args.epochs, seed=args.seed,
                             events_path=args.events)
            print(f"detector trained on {info['n_sequences']} sequences; "
                  f"threshold {info['theta']:.4f} "
                  f"(mu {info['mu']:.4f}, sigma {info['sigma']:.4f})")
        elif args.cmd == "detect":
            info = run_detect(args.model, args.graph, args.out)
            print(f"{info['n_flagged']} of {info['n_behaviors']} behaviors "
                  f"flagged (threshold {info['theta']:.4f}) -> {args.out}")
        elif args.cmd == "investigate":
            cfg = _load_config(args.config)
            info = run_investigate(args.verdicts, args.model, args.out, cfg)
            print(f"{info['n_flagged']} flagged behaviors -> "
                  f"{info['n_super_edges']} super-edges (k={info['k']})")
        elif args.cmd == "eval":
            cfg = _load_config(args.config)
            run_eval(args.verdicts, args.truth, args.graph, args.out,
                     dedup_window=cfg.dedup_window)
            print(f"metrics written to {args.out}")
        else:  # pragma: no cover
            raise PipelineError(f"unknown command {args.cmd!r}")
    except (PipelineError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
