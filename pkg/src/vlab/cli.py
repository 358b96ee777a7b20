"""Batch command line: module demos, challenge generation/grading, IQ analysis.

Exit codes: 0 on success, 2 on validation errors (bad arguments, malformed
files, contract violations in the underlying modules).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import eye_diagram, papr_ccdf, spectrogram, welch_psd
from .core import load_iq
from .trainer import (
    ChallengeKind,
    ChallengeScenario,
    Difficulty,
    generate_challenge,
    grade_submission,
    run_module_demo,
)


def _cmd_demo(args) -> int:
    summary = run_module_demo(args.module, args.out, seed=args.seed)
    print(json.dumps({"module": args.module, **summary}))
    return 0


def _cmd_challenge_gen(args) -> int:
    scenario = ChallengeScenario(
        kind=ChallengeKind(args.kind),
        difficulty=Difficulty(args.difficulty),
        trainee_id=args.trainee,
        seed=args.seed,
    )
    visible, _ = generate_challenge(scenario, args.out)
    print(json.dumps(visible))
    return 0


def _cmd_challenge_grade(args) -> int:
    scenario = json.loads(Path(args.scenario).read_text())
    truth = json.loads(Path(args.truth).read_text())
    answer = json.loads(Path(args.answer).read_text())
    report = grade_submission(scenario, truth, answer)
    print(json.dumps(report.to_dict()))
    return 0


def _cmd_analyze(args) -> int:
    signal = load_iq(args.iq_file)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.iq_file).stem
    produced = []
    if args.psd:
        psd = welch_psd(signal, segment_len=min(1024, len(signal.samples)), overlap_frac=0.5)
        path = out / f"{stem}_psd.csv"
        rows = "\n".join(f"{f},{p}" for f, p in zip(psd.freq_bins_hz, psd.power_db))
        path.write_text("freq_hz,power_db\n" + rows + "\n")
        produced.append(str(path))
    if args.ccdf:
        curve = papr_ccdf(signal, np.arange(0.0, 12.01, 0.25))
        path = out / f"{stem}_ccdf.csv"
        rows = "\n".join(f"{t},{p}" for t, p in zip(curve.threshold_db, curve.prob_exceed))
        path.write_text("threshold_db,prob_exceed\n" + rows + "\n")
        produced.append(str(path))
    if args.eye:
        grid = eye_diagram(signal, samples_per_symbol=args.eye)
        path = out / f"{stem}_eye.csv"
        lines = [",".join(str(v) for v in row) for row in grid.traces]
        path.write_text("\n".join(lines) + "\n")
        produced.append(str(path))
    if args.spectrogram:
        spec = spectrogram(signal, fft_len=min(256, len(signal.samples)), hop=64)
        path = out / f"{stem}_spectrogram.csv"
        lines = [",".join(str(v) for v in row) for row in spec.magnitude_db]
        path.write_text("\n".join(lines) + "\n")
        produced.append(str(path))
    print(json.dumps({"produced": produced}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    demo = sub.add_parser("demo", help="run one training module demo (1-9)")
    demo.add_argument("module", type=int, choices=range(1, 10))
    demo.add_argument("--out", required=True)
    demo.add_argument("--seed", type=int, default=0)
    demo.set_defaults(func=_cmd_demo)

    challenge = sub.add_parser("challenge", help="generate or grade challenges")
    csub = challenge.add_subparsers(dest="challenge_command", required=True)

    gen = csub.add_parser("gen")
    gen.add_argument("--kind", required=True, choices=[k.value for k in ChallengeKind])
    gen.add_argument("--difficulty", required=True, choices=[d.value for d in Difficulty])
    gen.add_argument("--trainee", required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_challenge_gen)

    grade = csub.add_parser("grade")
    grade.add_argument("--scenario", required=True)
    grade.add_argument("--truth", required=True)
    grade.add_argument("--answer", required=True)
    grade.set_defaults(func=_cmd_challenge_grade)

    analyze = sub.add_parser("analyze", help="emit analysis views of an IQ file")
    analyze.add_argument("iq_file")
    analyze.add_argument("--psd", action="store_true")
    analyze.add_argument("--ccdf", action="store_true")
    analyze.add_argument("--eye", type=int, metavar="SPS")
    analyze.add_argument("--spectrogram", action="store_true")
    analyze.add_argument("--out", default=".")
    analyze.set_defaults(func=_cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"vlab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
