"""Command-line entry point: ``mpnle {trial,sweep,dump-weights,oracle-check,plot,make-speech}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import harness, oracle
from .gains import NleConfig, optimal_gains
from .harness import SweepGrid, TrialSpec

log = logging.getLogger("mpnle")


def parse_values(text: str) -> list:
    """``"-30:30:5"`` (inclusive range) or ``"0,0.3,0.7"``."""
    if ":" in text:
        start, stop, step = (float(p) for p in text.split(":"))
        count = int(round((stop - start) / step)) + 1
        return [float(round(start + i * step, 10)) for i in range(count)]
    return [float(p) for p in text.split(",") if p]


def load_config(args) -> NleConfig:
    if args.config:
        return NleConfig.from_json(args.config)
    return NleConfig()


def cmd_trial(args) -> int:
    config = load_config(args)
    speech = None if args.speech else harness.synthetic_speech(seed=args.seed)
    spec = TrialSpec(args.speech, args.noise, args.snr, args.astar, args.seed, config,
                     speech=speech)
    out = Path(args.out_dir)
    result = harness.run_trial(spec, out, args.wav_format, args.diagnostics)
    harness.write_rows(out / "trial.csv", [result.row()])
    if args.plot:
        from .plotting import plot_gain_plan
        plot_gain_plan(result.plan, out / "gains.png")
    r = result.report
    print(f"ASII {r.asii:.4f} (unprocessed {r.asii_unprocessed:.4f}, projected "
          f"{r.asii_projected:.4f})  MSE {r.mse_penalty:.4g}  "
          f"power +{r.power_increase_db:.2f} dB  SegSNR {r.seg_snr_db:.2f} dB  "
          f"limited bands {r.limiter_bands}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args)
    grid = SweepGrid(args.noise, parse_values(args.snr), parse_values(args.astar),
                     args.trials, args.speech or [], args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    t0 = time.perf_counter()
    rows = harness.run_sweep(grid, config, csv_path, jobs=args.jobs,
                             wav_dir=out / "wav" if args.write_wavs else None,
                             wav_format=args.wav_format)
    log.info("%d rows in %.1f s", len(rows), time.perf_counter() - t0)
    print(f"wrote {csv_path} and {harness.means_path(csv_path)}")
    if not args.no_plot:
        from .plotting import plot_target_sweep
        means = harness.aggregate(rows)
        for noise in grid.noise_kinds:
            name = noise.replace("file:", "file-").replace("/", "_")
            fig = plot_target_sweep(means, out / f"sweep_{name}.png", noise)
            print(f"wrote {fig}")
    return 0


def cmd_dump_weights(args) -> int:
    config = load_config(args)
    config.subband_weights().to_csv(args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.instances):
        inst = oracle.random_instance(rng)
        closed, _ = optimal_gains(inst.band_power, inst.noise_band_power, inst.snr_target)
        numeric = oracle.solve_numeric(inst)
        worst = max(worst, float(np.max(np.abs(numeric - closed) / closed)))
    ok = worst <= args.tol
    print(f"{args.instances} instances, max relative gain error {worst:.3e} "
          f"({'PASS' if ok else 'FAIL'} at {args.tol:g})")
    return 0 if ok else 1


def cmd_plot(args) -> int:
    from .plotting import plot_target_sweep
    rows = harness.read_rows(args.csv)
    means = rows if "n_trials" in rows[0] else harness.aggregate(rows)
    path = plot_target_sweep(means, args.out, args.noise)
    print(f"wrote {path}")
    return 0


def cmd_make_speech(args) -> int:
    harness.save_wav(args.out, harness.synthetic_speech(args.duration, args.seed),
                     args.wav_format)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpnle", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with NleConfig fields")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--wav-format", choices=["float32", "float64", "pcm16"],
                       default="float32")

    p = sub.add_parser("trial", help="process one utterance in one noise condition")
    common(p)
    p.add_argument("--speech", help="16 kHz mono WAV (default: synthetic speech)")
    p.add_argument("--noise", default="white",
                   help="white | speech_shaped | file:<path>")
    p.add_argument("--snr", type=float, default=0.0)
    p.add_argument("--astar", type=float, default=0.7)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--diagnostics", help="write per-band diagnostics CSV here")
    p.add_argument("--plot", action="store_true", help="also write gains.png")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("sweep", help="noise x SNR x target grid, CSV + figures")
    common(p)
    p.add_argument("--speech", nargs="*", help="WAV files, cycled over trials")
    p.add_argument("--noise", nargs="+", default=["white"])
    p.add_argument("--snr", default="-30:30:5")
    p.add_argument("--astar", default="0,0.3,0.5,0.7,0.9")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--write-wavs", action="store_true")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-weights", help="write the subband weight matrix as CSV")
    p.add_argument("--config")
    p.add_argument("--out", default="weights.csv")
    p.set_defaults(func=cmd_dump_weights)

    p = sub.add_parser("oracle-check", help="closed form vs numeric solver")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("plot", help="render a figure from a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--noise")
    p.add_argument("--out", default="sweep.png")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("make-speech", help="write a synthetic speech-like WAV")
    p.add_argument("out")
    p.add_argument("--duration", type=float, default=2.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--wav-format", choices=["float32", "float64", "pcm16"],
                   default="float32")
    p.set_defaults(func=cmd_make_speech)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"mpnle: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
