"""Command-line entry point: ``ptav track|eval|synth|compare``.

Exit codes: 0 success, 2 sequence or input error, 3 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import sys
from pathlib import Path

from PIL import Image, ImageDraw

from .bench import io as seqio
from .bench import metrics, plots
from .bench.ope import RunConfig
from .bench.synth import ScriptError, parse_script, synth_generate
from .runtime import RuntimeConfig, run
from .tracker import TrackerConfig
from .verifier import VerifierConfig

EXIT_SEQUENCE = 2
EXIT_CONFIG = 3

SECTIONS = {"runtime": RuntimeConfig, "tracker": TrackerConfig, "verifier": VerifierConfig}


class ConfigError(Exception):
    pass


def _convert(raw, default, key):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if raw.lower() == "none":
            return None
        if default is None:  # optional integer fields
            return int(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text) -> dict[str, dict]:
    """Flat ``section.key = value`` lines; ``#`` starts a comment."""
    out: dict[str, dict] = {name: {} for name in SECTIONS}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected section.key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        defaults = {f.name: getattr(SECTIONS[section](), f.name) for f in dataclasses.fields(SECTIONS[section])}
        if name not in defaults:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        out[section][name] = _convert(value, defaults[name], key)
    return out


def build_config(args) -> RunConfig:
    values: dict[str, dict] = {name: {} for name in SECTIONS}
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        values = parse_config(text)
    flags = {
        ("runtime", "mode"): getattr(args, "mode", None),
        ("runtime", "n_int"): getattr(args, "n_int", None),
        ("runtime", "verifier"): getattr(args, "verifier", None),
        ("tracker", "alpha"): getattr(args, "alpha", None),
        ("verifier", "tau0"): getattr(args, "tau0", None),
        ("verifier", "tau1"): getattr(args, "tau1", None),
        ("verifier", "tau2"): getattr(args, "tau2", None),
        ("verifier", "gamma_init"): getattr(args, "gamma", None),
        ("verifier", "score_mode"): getattr(args, "score_mode", None),
        ("verifier", "seed"): getattr(args, "seed", None),
    }
    delay = getattr(args, "verify_delay_ms", None)
    if delay is not None:
        flags[("runtime", "verify_delay")] = delay / 1000.0
    for (section, key), v in flags.items():
        if v is not None:
            values[section][key] = v
    try:
        return RunConfig(**{name: cls(**values[name]) for name, cls in SECTIONS.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _load(path, gt=None) -> seqio.Sequence:
    seq = seqio.load_sequence(path)
    if gt is not None:
        seq = seqio.Sequence(seq.name, seq.frames, seqio.read_boxes(gt))
    return seq


def annotate(seq, boxes, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, box in enumerate(boxes):
        im = Image.fromarray(seq.raw(i)).convert("RGB")
        draw = ImageDraw.Draw(im)
        if seq.ground_truth is not None:
            g = seq.ground_truth[i]
            draw.rectangle([g.x, g.y, g.x + g.w - 1, g.y + g.h - 1], outline=(0, 255, 0))
        if box is not None:
            draw.rectangle([box.x, box.y, box.x + box.w - 1, box.y + box.h - 1], outline=(255, 0, 0))
        im.save(outdir / f"{i + 1:04d}.png")


def cmd_track(args) -> int:
    cfg = build_config(args)
    seq = _load(args.seq, args.gt)
    init = seq.ground_truth[0] if seq.ground_truth is not None else None
    if args.init:
        init = seqio.parse_box_line(args.init)
    if init is None:
        raise seqio.SequenceError("no initial box: pass --gt, --init or provide groundtruth_rect.txt")
    result = run(seq, init, cfg.runtime, cfg.tracker, cfg.verifier)
    if result.aborted:
        raise seqio.SequenceError(f"tracking aborted: {result.error}")
    out = Path(args.out or "results.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    seqio.write_boxes(out, result.boxes)
    if args.trace:
        result.trace.write(args.trace)
    if args.annotate:
        annotate(seq, result.boxes, args.annotate)
    print(f"{seq.name}: {len(seq)} frames, {result.fps:.1f} fps, "
          f"{result.n_requests} requests, {result.n_rollbacks} trace-backs -> {out}")
    return 0


def cmd_eval(args) -> int:
    if args.gt:
        gt = seqio.read_boxes(args.gt)
    elif args.seq:
        gt = seqio.load_sequence(args.seq).ground_truth
    else:
        gt = None
    if gt is None:
        raise seqio.SequenceError("no ground truth to evaluate against")
    reports = {}
    for path in args.results:
        boxes = seqio.read_boxes(path)
        try:
            reports[Path(path).stem] = metrics.compute_metrics(boxes, gt)
        except ValueError as exc:
            raise seqio.SequenceError(f"{path}: {exc}") from None
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for name, rep in reports.items():
        text = metrics.format_report(rep)
        if len(reports) > 1:
            print(f"[{name}]")
        print(text, end="")
        if out:
            (out / f"{name}_report.txt").write_text(text)
            prec, succ = metrics.curves_csv(rep)
            (out / f"{name}_precision.csv").write_text(prec)
            (out / f"{name}_success.csv").write_text(succ)
    if out:
        (out / "precision.svg").write_text(plots.precision_svg(reports))
        (out / "success.svg").write_text(plots.success_svg(reports))
    return 0


def cmd_synth(args) -> int:
    try:
        text = Path(args.script).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read script: {exc}") from None
    try:
        seq = synth_generate(parse_script(text), seed=args.seed or 0)
    except ScriptError as exc:
        raise ConfigError(f"bad script: {exc}") from None
    seqio.save_sequence(seq, args.out)
    print(f"{seq.name}: {len(seq)} frames -> {args.out}")
    return 0


def compare_rows(base: RunConfig, sequences, n_ints, modes):
    """One row per (mode, n_int): unweighted means over the sequences."""
    rows = []
    for mode, n_int in itertools.product(modes, n_ints):
        rc = dataclasses.replace(base.runtime, mode=mode, n_int=n_int)
        reps = []
        for seq in sorted(sequences, key=lambda s: s.name):
            r = run(seq, seq.ground_truth[0], rc, base.tracker, base.verifier)
            if r.aborted:
                raise seqio.SequenceError(f"{seq.name}: tracking aborted: {r.error}")
            reps.append(metrics.compute_metrics(r.boxes, seq.ground_truth, fps=r.fps))
        agg = metrics.aggregate(reps)
        rows.append({"mode": mode, "n_int": n_int, "dpr": agg.dpr, "osr": agg.osr,
                     "cle": agg.mean_cle, "fps": agg.fps})
    return rows


def format_table(rows) -> str:
    lines = [f"{'mode':<9} {'N_int':>5} {'DPR':>7} {'OSR':>7} {'CLE':>8} {'FPS':>8}"]
    for r in rows:
        lines.append(f"{r['mode']:<9} {r['n_int']:>5d} {r['dpr']:>7.3f} {r['osr']:>7.3f} "
                     f"{r['cle']:>8.2f} {r['fps']:>8.1f}")
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    base = build_config(args)
    seqs = []
    for path in args.seq:
        seq = seqio.load_sequence(path)
        if seq.ground_truth is None:
            raise seqio.SequenceError(f"{path}: compare needs ground truth")
        seqs.append(seq)
    n_ints = args.sweep_n_int or [base.runtime.n_int]
    modes = args.modes or [base.runtime.mode]
    try:
        for n in n_ints:
            RuntimeConfig(n_int=n, mode=modes[0])
        for m in modes:
            RuntimeConfig(mode=m)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    table = format_table(compare_rows(base, seqs, n_ints, modes))
    print(table, end="")
    if args.out:
        Path(args.out).write_text(table)
    return 0


def _add_run_flags(p):
    p.add_argument("--config", help="flat section.key = value file")
    p.add_argument("--mode", choices=("lockstep", "async"))
    p.add_argument("--n-int", type=int, dest="n_int")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau0", type=float)
    p.add_argument("--tau1", type=float)
    p.add_argument("--tau2", type=float)
    p.add_argument("--gamma", type=float, help="initial search-region factor")
    p.add_argument("--score-mode", choices=("cluster-mean", "literal-sum"), dest="score_mode")
    p.add_argument("--verifier", choices=("hogcolor", "none"))
    p.add_argument("--verify-delay-ms", type=float, dest="verify_delay_ms",
                   help="artificial delay added to every verification")
    p.add_argument("--seed", type=int)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptav", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track one sequence")
    p.add_argument("--seq", required=True, help="sequence directory (img/ + groundtruth_rect.txt)")
    p.add_argument("--gt", help="ground-truth file overriding the one in --seq")
    p.add_argument("--init", help="initial box x,y,w,h (1-based) when there is no ground truth")
    p.add_argument("--out", help="results file (default results.txt)")
    p.add_argument("--trace", help="write the event trace here")
    p.add_argument("--annotate", help="write annotated frames into this directory")
    _add_run_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score results files against ground truth")
    p.add_argument("results", nargs="+")
    p.add_argument("--gt")
    p.add_argument("--seq")
    p.add_argument("--out", help="directory for reports, CSV curves and SVG plots")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="render a scripted synthetic sequence")
    p.add_argument("script")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compare", help="DPR/OSR/CLE/FPS table over configurations")
    p.add_argument("--seq", nargs="+", required=True)
    p.add_argument("--sweep-n-int", type=int, nargs="+", dest="sweep_n_int")
    p.add_argument("--modes", nargs="+", choices=("lockstep", "async"))
    p.add_argument("--out", help="also write the table here")
    _add_run_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (seqio.SequenceError, OSError) as exc:
        print(f"sequence error: {exc}", file=sys.stderr)
        return EXIT_SEQUENCE


if __name__ == "__main__":
    sys.exit(main())
