"""Command-line front end.

Subcommands:

  bench-prefill --config FILE --out DIR    prefill latency + KV accounting
  bench-decode  --config FILE --out DIR    decode tokens per second
  bench-train   --config FILE --out DIR    proxy train-step timing
  needle        --spec FILE   --out DIR    needle retrieval grid
  dtw-check     --speech BLOB --transcript BLOB --dim D   alignment check
  ctc-check     --posteriors BLOB --units K --target 1,2  CTC loss check
  selftest                                 run the built-in oracle suites

Config and spec files are JSON; omitted fields fall back to the defaults.
--seed overrides the seed in any config. Exit status is nonzero when an
invariant check or selftest fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .alignment import AlignConfig, alignment_grad, alignment_loss, dist_matrix, dtw_accumulate
from .bench import (
    bench_config_from_dict,
    default_bench_config,
    default_needle_config,
    needle_config_from_dict,
    run_decode_bench,
    run_needle,
    run_prefill_bench,
    run_train_step_bench,
    write_bench_report,
    write_needle_report,
)
from .ctc import FramePosteriors, UnitSequence, ctc_loss
from .errors import InvariantViolation
from .extractor import ExtractorConfig, retention_schedule
from .longaudio import export_haystack, load_haystack_spec
from .modality import read_embeddings
from .numerics import finite_diff_grad
from .selftest import run_selftest


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _bench_command(kind: str, runner):
    def cmd(args):
        if args.config:
            cfg = bench_config_from_dict(_load_json(args.config), kind)
        else:
            cfg = default_bench_config(kind)
        if args.seed is not None:
            cfg.seed = args.seed
        print(f"running {kind} bench: {len(cfg.variants)} variants x "
              f"{len(cfg.context_lengths)} lengths, repeats={cfg.repeats}")
        report = runner(cfg)
        write_bench_report(report, args.out)
        print(f"wrote {args.out}/{kind}.json, {kind}.csv, {kind}_summary.txt")
        return 0

    return cmd


def _cmd_needle(args):
    if args.spec:
        doc = _load_json(args.spec)
        cfg = needle_config_from_dict(doc)
    else:
        cfg = default_needle_config()
    if args.seed is not None:
        cfg.seed = args.seed
    print(
        f"needle grid: {len(cfg.durations_s)} durations x {len(cfg.offsets_frac)} "
        f"offsets, strength {cfg.strength}"
    )
    report = run_needle(cfg)
    write_needle_report(report, args.out)
    print(f"verdict fraction {report.verdict_fraction():.3f}, "
          f"mean survival {report.mean_survival():.3f}")
    if args.export_dir:
        # also emit one manifest + blob per grid cell for external use
        for i, cell in enumerate(report.cells):
            from .longaudio import HaystackSpec

            spec = HaystackSpec(
                duration_s=cell.duration_s,
                needle_offset_s=cell.offset_s,
                needle_len_s=cfg.needle_len_s,
                strength=cfg.strength,
                seed=cfg.seed * 10_007 + i,
                dim=cfg.model.dim,
                chunk=cfg.chunk,
                query_tokens=cfg.query_tokens,
            )
            export_haystack(spec, args.export_dir, name=f"haystack_{i:03d}")
        print(f"exported {len(report.cells)} manifests to {args.export_dir}")
    print(f"wrote {args.out}/needle.json, needle.csv, needle_summary.txt")
    return 0


def _cmd_dtw_check(args):
    speech = read_embeddings(args.speech, args.dim)
    transcript = read_embeddings(args.transcript, args.dim)
    cfg = AlignConfig(tau=args.tau, lam=args.lam)
    loss = alignment_loss(speech, transcript, cfg)
    cost = dtw_accumulate(dist_matrix(speech, transcript, cfg.tau))
    print(f"speech tokens: {speech.shape[0]}, transcript tokens: {transcript.shape[0]}")
    print(f"alignment loss: {loss:.6f}  (total path cost {cost.total:.6f})")
    print("path:", " ".join(f"({l},{s})" for l, s in cost.path))

    gx, gy = alignment_grad(speech, transcript, cfg)
    L, S, d = speech.shape[0], transcript.shape[0], speech.shape[1]

    def flat_loss(vec):
        x = vec[: L * d].reshape(L, d)
        y = vec[L * d :].reshape(S, d)
        return alignment_loss(x, y, cfg)

    flat = np.concatenate([speech.ravel(), transcript.ravel()])
    num = finite_diff_grad(flat_loss, flat, h=1e-5)
    ana = np.concatenate([gx.ravel(), gy.ravel()])
    denom = max(float(np.max(np.abs(num))), 1e-12)
    rel = float(np.max(np.abs(ana - num))) / denom
    print(f"gradient check: max rel err {rel:.3e} vs central differences")
    if rel > 1e-4:
        print("gradient check FAILED (tolerance 1e-4)")
        return 1
    print("gradient check passed")
    return 0


def _cmd_ctc_check(args):
    blob = Path(args.posteriors).read_bytes()
    cols = args.units + 1
    if len(blob) % (4 * cols) != 0:
        print(f"posteriors blob is not a whole number of {cols}-wide float32 rows")
        return 1
    probs = np.frombuffer(blob, dtype="<f4").reshape(-1, cols).astype(np.float64)
    # accept either probabilities or log probabilities
    if np.all(probs <= 0.0):
        post = FramePosteriors(logprobs=probs)
    else:
        with np.errstate(divide="ignore"):
            post = FramePosteriors(logprobs=np.log(probs))
    target = UnitSequence(
        units=tuple(int(t) for t in args.target.split(",") if t != ""),
        num_units=args.units,
    )
    loss = ctc_loss(post, target)
    print(f"frames: {post.frames}, units: {post.num_units}, target: {list(target.units)}")
    print(f"ctc loss: {loss:.9f}" if math.isfinite(loss) else "ctc loss: infeasible (inf)")
    if post.frames <= 6 and post.num_units <= 4:
        from .oracles import ctc_loss_bruteforce

        brute = ctc_loss_bruteforce(post.logprobs, target.units)
        print(f"brute-force alignment sum: {brute:.9f}" if math.isfinite(brute) else
              "brute-force alignment sum: infeasible (inf)")
        both_inf = math.isinf(loss) and math.isinf(brute)
        if not both_inf and abs(loss - brute) > 1e-9 * max(1.0, abs(brute)):
            print("MISMATCH between forward pass and brute force")
            return 1
        print("matches brute force")
    else:
        print("instance too large for brute-force comparison (needs T<=6, K<=4)")
    return 0


def _cmd_selftest(args):
    failures = run_selftest(verbose=True)
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tinymm",
        description="toy multi-modal decoder benchmarks and checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for kind, runner in (
        ("prefill", run_prefill_bench),
        ("decode", run_decode_bench),
        ("train", run_train_step_bench),
    ):
        p = sub.add_parser(f"bench-{kind}", help=f"run the {kind} benchmark")
        p.add_argument("--config", help="JSON benchmark config")
        p.add_argument("--out", default=f"bench_out/{kind}", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.set_defaults(func=_bench_command(kind, runner))

    p = sub.add_parser("needle", help="needle-in-a-haystack retrieval grid")
    p.add_argument("--spec", help="JSON needle spec")
    p.add_argument("--out", default="bench_out/needle", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override spec seed")
    p.add_argument("--export-dir", default=None,
                   help="also write per-cell manifest + embedding blobs here")
    p.set_defaults(func=_cmd_needle)

    p = sub.add_parser("dtw-check", help="alignment loss, path, and gradient check")
    p.add_argument("--speech", required=True, help="float32 embedding blob")
    p.add_argument("--transcript", required=True, help="float32 embedding blob")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=0.1)
    p.set_defaults(func=_cmd_dtw_check)

    p = sub.add_parser("ctc-check", help="CTC loss with brute-force comparison")
    p.add_argument("--posteriors", required=True,
                   help="float32 blob of T x (units+1) probabilities or log probabilities")
    p.add_argument("--units", type=int, required=True, help="unit vocabulary size K")
    p.add_argument("--target", default="", help="comma-separated unit ids")
    p.set_defaults(func=_cmd_ctc_check)

    p = sub.add_parser("selftest", help="run all built-in oracle suites")
    p.set_defaults(func=_cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
