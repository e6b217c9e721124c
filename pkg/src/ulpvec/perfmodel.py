"""Analytic throughput model over recorded instruction counts.

A vector instruction occupies its functional unit for
``max(1, ceil(VL * SEW / (lanes * datapath_bits)))`` cycles; scalar
instructions and ``vsetvl`` cost one issue slot.  In the default overlapped
model the arithmetic datapath, slide unit and load/store unit run
concurrently behind an in-order single-issue front end, and the run takes
as long as the busiest resource.  ``overlap=False`` serializes everything.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .kernels import ConvRun, ConvShape, RegionError, random_tensor, run_conv
from .packing import Precision, admissible, region_violation
from .vmachine import PerfCounters
from .vmachine.isa import FAMILY

UNIT_OF = {
    "vadd.vv": "arith", "vmul.vv": "arith", "vsrl.vi": "arith",
    "vmacc.vv": "arith", "vmacc.vx": "arith", "vmacsr.vv": "arith", "vmacsr.vx": "arith",
    "vmv.v.v": "arith", "vmv.v.i": "arith",
    "vslidedown.vi": "slide",
    "vle": "mem", "vse": "mem",
}
UNITS = ("arith", "slide", "mem")

CSV_COLUMNS = ("variant", "E", "Na", "Nw", "C", "H", "W", "Fh", "Fw", "instructions",
               "modeled_cycles", "ops_per_cycle", "speedup_vs_int16", "oracle_match",
               "overflow_flags")


@dataclass(frozen=True)
class CycleModel:
    lanes: int = 4
    datapath_bits_per_lane: int = 64
    issue_cost: int = 1
    overlap: bool = True

    def vector_cycles(self, vl: int, sew: int) -> int:
        return max(1, math.ceil(vl * sew / (self.lanes * self.datapath_bits_per_lane)))

    def peak_element_ops(self, sew: int) -> Fraction:
        return Fraction(self.lanes * self.datapath_bits_per_lane, sew)


def unit_busy(counters: PerfCounters, cfg: CycleModel = CycleModel(),
              sew: int | None = None, vl: int | None = None) -> dict[str, int]:
    """Cycles each resource is occupied, including the ``issue`` front end."""
    busy = dict.fromkeys(UNITS + ("issue",), 0)
    for (_, op, ivl, isew), n in counters.shapes.items():
        busy["issue"] += n * cfg.issue_cost
        unit = UNIT_OF.get(op)
        if unit is None:
            continue
        busy[unit] += n * cfg.vector_cycles(ivl if vl is None else vl, isew if sew is None else sew)
    return busy


def model_cycles(counters: PerfCounters, cfg: CycleModel = CycleModel(),
                 sew: int | None = None, vl: int | None = None) -> int:
    """Modeled cycles for a completed run.

    ``sew``/``vl`` override the recorded per-instruction values, for
    what-if evaluation of a count profile at a uniform vector length.
    """
    if not counters.shapes:
        return 0
    busy = unit_busy(counters, cfg, sew, vl)
    if cfg.overlap:
        return max(busy.values())
    # serial: each vector instruction costs its element cycles, others one issue slot
    scalar = sum(n for (_, op, _, _), n in counters.shapes.items() if op not in UNIT_OF)
    return sum(busy[u] for u in UNITS) + scalar * cfg.issue_cost


def operands_per_element(variant: str) -> int:
    return 2 if variant in ("native", "vmacsr") else 1


@dataclass
class PerfReport:
    variant: str
    shape: ConvShape
    precision: Precision | None
    elem_bits: int
    instructions: int
    cycles: int
    macs: int
    utilization: float
    oracle_match: bool | None = None
    overflow_flags: int = 0
    speedup: float | None = None
    busy: dict = field(default_factory=dict)

    @property
    def ops(self) -> int:
        return 2 * self.macs

    @property
    def ops_per_cycle(self) -> float:
        return ops_per_cycle(self.shape, self.cycles)


def ops_per_cycle(shape: ConvShape, cycles: int) -> float:
    """Logical operations (multiply + add per MAC) per modeled cycle."""
    ops = 2 * shape.macs
    if ops == 0:
        return 0.0
    if cycles <= 0:
        raise ZeroDivisionError("ops_per_cycle of a run with zero cycles")
    return ops / cycles


def utilization(run: ConvRun, cycles: int, cfg: CycleModel = CycleModel()) -> float:
    peak = cfg.peak_element_ops(run.sew) * operands_per_element(run.variant)
    return float(Fraction(run.shape.macs, cycles) / peak)


def report(run: ConvRun, cfg: CycleModel = CycleModel()) -> PerfReport:
    cycles = model_cycles(run.counters, cfg)
    match = None
    if run.oracle is not None:
        match = run.modular_match
    return PerfReport(
        variant=run.variant, shape=run.shape, precision=run.precision, elem_bits=run.elem_bits,
        instructions=run.counters.instructions, cycles=cycles, macs=run.shape.macs,
        utilization=utilization(run, cycles, cfg) if cycles else 0.0,
        oracle_match=match, overflow_flags=len(run.overflow),
        busy=unit_busy(run.counters, cfg),
    )


def speedup(rep: PerfReport, baseline: PerfReport) -> float:
    if rep.shape != baseline.shape:
        raise ValueError(f"shape mismatch: {rep.shape} vs {baseline.shape}")
    return baseline.cycles / rep.cycles


# -- sweeps ------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    variant: str
    elem_bits: int
    act_bits: int
    wgt_bits: int
    channels: int
    height: int
    width: int
    kh: int
    kw: int
    budget_policy: str = "conservative"
    prepacked_weights: bool = False
    seed: int = 0

    @property
    def shape(self) -> ConvShape:
        return ConvShape(self.channels, self.height, self.width, self.kh, self.kw)

    @property
    def precision(self) -> Precision:
        return Precision(self.act_bits, self.wgt_bits)

    def admissible(self) -> bool:
        if self.variant == "int16":
            return True
        return admissible(self.precision, self.elem_bits, self.variant)


@dataclass
class SweepRow:
    point: SweepPoint
    report: PerfReport | None
    error: str | None = None

    def csv_fields(self) -> list[str]:
        p = self.point
        e = 16 if p.variant == "int16" else p.elem_bits
        head = [p.variant, e, p.act_bits, p.wgt_bits, p.channels, p.height, p.width, p.kh, p.kw]
        if self.report is None:
            return [str(v) for v in head] + ["", "", "", "", self.error or "error", ""]
        r = self.report
        return [str(v) for v in head] + [
            str(r.instructions), str(r.cycles), f"{r.ops_per_cycle:.4f}",
            "" if r.speedup is None else f"{r.speedup:.4f}",
            "true" if r.oracle_match else "false", str(r.overflow_flags),
        ]


def fixture_pair(point: SweepPoint, act_bits=None, wgt_bits=None):
    """Seeded uniform input/kernel tensors for a sweep point."""
    rng = np.random.default_rng(point.seed)
    s = point.shape
    inp = random_tensor(rng, (s.channels, s.height, s.width), act_bits or point.act_bits)
    ker = random_tensor(rng, (s.channels, s.kh, s.kw), wgt_bits or point.wgt_bits)
    return inp, ker


def run_point(point: SweepPoint, cfg: CycleModel = CycleModel()) -> SweepRow:
    if not point.admissible():
        why = region_violation(point.precision, point.elem_bits, point.variant)
        return SweepRow(point, None, "region-violation" if why else "inadmissible")
    inp, ker = fixture_pair(point)
    try:
        run = run_conv(point.variant, inp, ker, point.precision, point.elem_bits,
                       policy=point.budget_policy, prepacked_weights=point.prepacked_weights)
    except RegionError:
        return SweepRow(point, None, "region-violation")
    return SweepRow(point, report(run, cfg))


def _baseline_point(point: SweepPoint) -> SweepPoint:
    return replace(point, variant="int16", elem_bits=16, act_bits=1, wgt_bits=1,
                   budget_policy="conservative", prepacked_weights=False)


def sweep(points, cfg: CycleModel = CycleModel(), jobs: int = 1) -> list[SweepRow]:
    """Run every point plus one int16 baseline per distinct shape.

    Rows come back in input order regardless of ``jobs``.
    """
    points = list(points)
    baselines = sorted({_baseline_point(p) for p in points},
                       key=lambda p: (p.channels, p.height, p.width, p.kh, p.kw, p.seed))
    work = baselines + points
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_point, work, [cfg] * len(work)))
    else:
        rows = [run_point(p, cfg) for p in work]
    base = {b: r.report for b, r in zip(baselines, rows)}
    out = rows[len(baselines):]
    for row in out:
        if row.report is not None:
            row.report.speedup = speedup(row.report, base[_baseline_point(row.point)])
    return out


def to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow(row.csv_fields())
    return buf.getvalue()


def summary_table(rows: list[SweepRow]) -> str:
    lines = [f"{'variant':8} {'E':>3} {'prec':>6} {'shape':>18} {'cycles':>12} "
             f"{'ops/cyc':>8} {'speedup':>8} {'match':>6} {'ovf':>6}"]
    for row in rows:
        p = row.point
        shape = f"{p.channels}x{p.height}x{p.width}/{p.kh}x{p.kw}"
        prec = f"W{p.wgt_bits}A{p.act_bits}"
        if row.report is None:
            lines.append(f"{p.variant:8} {p.elem_bits:>3} {prec:>6} {shape:>18} {row.error:>12}")
            continue
        r = row.report
        sp = "" if r.speedup is None else f"{r.speedup:.2f}x"
        lines.append(f"{p.variant:8} {r.elem_bits:>3} {prec:>6} {shape:>18} {r.cycles:>12} "
                     f"{r.ops_per_cycle:>8.2f} {sp:>8} {str(r.oracle_match):>6} {r.overflow_flags:>6}")
    return "\n".join(lines)


def family_counts(counters: PerfCounters) -> dict[str, int]:
    out: dict[str, int] = {}
    for (_, op, _, _), n in counters.shapes.items():
        out[FAMILY[op]] = out.get(FAMILY[op], 0) + n
    return out
