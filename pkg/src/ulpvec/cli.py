"""Command-line front end.

Exit codes: 0 success, 1 verification mismatch, 2 region/overflow
rejection, 64 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import fixtures
from .config import ConfigError, RunConfig, load_sweep, parse_block, read_sweep_file
from .kernels import RegionError, run_conv
from .packing import ELEM_WIDTHS, MODES, Precision, region_map, region_violation
from .perfmodel import CycleModel, fixture_pair, report, summary_table, sweep, to_csv
from .vmachine import isa

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_REJECT = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p):
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--variant", choices=("oracle", "int16", "native", "vmacsr"))
    p.add_argument("--e", type=int, dest="elem_bits", help="packed element width (8 or 16)")
    p.add_argument("--na", type=int, dest="act_bits", help="activation bits")
    p.add_argument("--nw", type=int, dest="wgt_bits", help="weight bits")
    p.add_argument("--c", type=int, dest="channels")
    p.add_argument("--h", type=int, dest="height")
    p.add_argument("--w", type=int, dest="width")
    p.add_argument("--hw", type=int, help="input height and width")
    p.add_argument("--k", type=int, help="square kernel size")
    p.add_argument("--fh", type=int, dest="kh")
    p.add_argument("--fw", type=int, dest="kw")
    p.add_argument("--budget", type=int)
    p.add_argument("--budget-policy", dest="budget_policy", choices=("conservative", "paper"))
    p.add_argument("--prepacked-weights", dest="prepacked_weights", action="store_true", default=None)
    p.add_argument("--seed", type=int)


_RUN_KEYS = ("variant", "elem_bits", "act_bits", "wgt_bits", "channels", "height", "width",
             "hw", "k", "kh", "kw", "budget", "budget_policy", "prepacked_weights", "seed")


def _run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg.update(parse_block(Path(args.config).read_text()))
    flags = {k: getattr(args, k) for k in _RUN_KEYS if getattr(args, k, None) is not None}
    # explicit dimensions win over --hw/--k regardless of order
    for combined, parts in (("hw", ("height", "width")), ("k", ("kh", "kw"))):
        if combined in flags:
            cfg.update({combined: flags.pop(combined)})
    cfg.update(flags)
    cfg.validate()
    return cfg


def cmd_verify(args) -> int:
    cfg = _run_config(args)
    prec = cfg.precision
    if cfg.variant in ("native", "vmacsr"):
        why = region_violation(prec, cfg.elem_bits, cfg.variant)
        if why:
            print(f"REJECT {prec} E={cfg.elem_bits} {cfg.variant}: {why}")
            return EXIT_REJECT
    if args.input or args.kernel:
        if not (args.input and args.kernel):
            raise UsageError("--input and --kernel must be given together")
        inp, ker = fixtures.load(args.input), fixtures.load(args.kernel)
        prec = Precision(max(1, min(inp.bits, 8)), max(1, min(ker.bits, 8)))
    else:
        inp, ker = fixture_pair(cfg.point())
    if args.dump_fixtures:
        out = Path(args.dump_fixtures)
        out.mkdir(parents=True, exist_ok=True)
        fixtures.save(inp, out / "input.bin")
        fixtures.save(ker, out / "kernel.bin")
    try:
        run = run_conv(cfg.variant, inp, ker, prec, cfg.elem_bits, cfg.budget,
                       cfg.budget_policy, cfg.prepacked_weights)
    except RegionError as err:
        print(f"REJECT {err}")
        return EXIT_REJECT
    rep = report(run)
    s = run.shape
    print(f"variant={cfg.variant} E={run.elem_bits} {prec} shape={s.channels}x{s.height}x{s.width} "
          f"kernel={s.kh}x{s.kw} seed={cfg.seed}"
          + (f" budget={run.budget}" if run.variant == "native" else ""))
    print(f"instructions={rep.instructions} modeled_cycles={rep.cycles} "
          f"ops/cycle={rep.ops_per_cycle:.3f} utilization={rep.utilization:.3f}")
    bad = run.first_mismatch()
    if bad is not None:
        (y, x), got, want = bad
        print(f"MISMATCH at (y={y}, x={x}): got {got}, expected {want} mod 2^{run.sew} = {want % (1 << run.sew)}")
        return EXIT_MISMATCH
    if run.overflow:
        (y, x), val = run.overflow[0]
        print(f"OVERFLOW {len(run.overflow)} outputs exceed {run.sew}-bit accumulators; "
              f"first at (y={y}, x={x}) true value {val}")
        return EXIT_REJECT
    print("MATCH: output equals oracle, no accumulator overflow")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.sweep:
        try:
            points = load_sweep(read_sweep_file(args.sweep))
        except OSError as err:
            raise UsageError(str(err)) from err
    else:
        points = [_run_config(args).point()]
    model = CycleModel(lanes=args.lanes, overlap=not args.serial_model)
    rows = sweep(points, model, jobs=args.jobs)
    text = to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.summary:
        print(summary_table(rows), file=sys.stderr)
    return EXIT_OK


def cmd_region(args) -> int:
    grid = region_map(args.elem_bits, args.mode)
    if args.format == "csv":
        print("Na," + ",".join(f"Nw{n}" for n in range(1, 9)))
        for na in range(1, 9):
            print(f"{na}," + ",".join("1" if v else "0" for v in grid[na - 1]))
        return EXIT_OK
    print(f"overflow-free region, E={args.elem_bits}, mode={args.mode} ('#' admissible)")
    print("Na\\Nw " + " ".join(str(n) for n in range(1, 9)))
    for na in range(1, 9):
        print(f"{na:>5} " + " ".join("#" if v else "." for v in grid[na - 1]))
    return EXIT_OK


def cmd_encode(args) -> int:
    try:
        word = isa.encode_vmacsr(args.form, args.vd, args.src1, args.vs2, args.masked)
    except isa.EncodeError as err:
        raise UsageError(str(err)) from err
    raw = isa.to_bytes(word)
    print("bytes  " + " ".join(f"{b:02x}" for b in raw))
    print(f"word   0x{word:08x}")
    for name, val in isa.field_table(word):
        print(f"  {name:8} {val}")
    decoded = isa.decode(word)
    print(f"decode {decoded}")
    return EXIT_OK


def cmd_gen_fixture(args) -> int:
    cfg = _run_config(args)
    inp, ker = fixture_pair(cfg.point())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, t in (("input", inp), ("kernel", ker)):
        fixtures.save(t, out / f"{name}.bin")
        if t.data.size <= args.csv_limit:
            fixtures.save(t, out / f"{name}.csv")
    print(f"wrote fixtures for seed={cfg.seed} to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ulpvec", description="Sub-byte packed conv2d on a simulated vector machine")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run one kernel against the oracle")
    _add_run_flags(v)
    v.add_argument("--input", help="input fixture (.bin or .csv)")
    v.add_argument("--kernel", help="kernel fixture (.bin or .csv)")
    v.add_argument("--dump-fixtures", help="directory to write the generated fixtures to")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="emit the performance CSV for one point or a sweep")
    _add_run_flags(b)
    b.add_argument("--sweep", help="sweep file (bundled: fig6.sweep)")
    b.add_argument("--out", help="write CSV here instead of stdout")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--lanes", type=int, default=4)
    b.add_argument("--serial-model", action="store_true", help="no overlap between functional units")
    b.add_argument("--summary", action="store_true", help="also print a text table on stderr")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("region", help="print the overflow-free (Na, Nw) grid")
    r.add_argument("--e", type=int, dest="elem_bits", choices=ELEM_WIDTHS, required=True)
    r.add_argument("--mode", choices=MODES, default="vmacsr")
    r.add_argument("--format", choices=("text", "csv"), default="text")
    r.set_defaults(func=cmd_region)

    e = sub.add_parser("encode", help="encode a vmacsr instruction word")
    e.add_argument("--form", choices=("vv", "vx"), default="vv")
    e.add_argument("--vd", type=int, required=True)
    e.add_argument("--vs1", "--rs1", type=int, dest="src1", required=True)
    e.add_argument("--vs2", type=int, required=True)
    e.add_argument("--masked", action="store_true")
    e.set_defaults(func=cmd_encode)

    g = sub.add_parser("gen-fixture", help="write seeded input/kernel fixtures")
    _add_run_flags(g)
    g.add_argument("--out-dir", required=True)
    g.add_argument("--csv-limit", type=int, default=4096, help="also write CSV up to this many values")
    g.set_defaults(func=cmd_gen_fixture)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, ValueError, OSError) as err:
        print(f"ulpvec {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
