"""Command-line runner: scenario CSV traces, client-count sweeps and scenario comparison."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .config import PRESETS, ExperimentConfig, load_preset, parse_config
from .engine import RoundMetrics, delay_to_target, rounds_to_target
from .errors import MTHFLError, SchemaError
from .experiment import run_experiment

log = logging.getLogger("mthfl")

ROUND_COLUMNS = ("round", "global_loss", "global_accuracy", "selected", "delivered", "failed",
                 "round_comm_delay_s", "round_comp_delay_s", "cumulative_delay_s")
SWEEP_COLUMNS = ("scenario", "clients", "rounds_to_target", "delay_to_target_s", "reached")


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return f"{v:.9g}"


def write_atomic(path: str | os.PathLike, text: str) -> Path:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def metrics_csv(metrics: Sequence[RoundMetrics]) -> str:
    return _csv_text(ROUND_COLUMNS, (
        (m.round, m.global_loss, m.global_accuracy, m.selected, m.delivered, m.failed,
         m.round_comm_delay, m.round_comp_delay, m.cumulative_delay) for m in metrics))


def run_scenario(cfg: ExperimentConfig, out: str | os.PathLike) -> Path:
    """Run one experiment and write its per-round CSV trace to ``out``."""
    try:
        return write_atomic(out, metrics_csv(run_experiment(cfg)))
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc}") from exc


@dataclass
class SweepRow:
    scenario: str
    clients: int
    rounds_to_target: Optional[int]
    delay_to_target_s: Optional[float]
    reached: bool


def sweep_clients(cfgs: Sequence[ExperimentConfig], counts: Sequence[int],
                  relative_target: Optional[float] = None) -> list[SweepRow]:
    """Delay to target accuracy per scenario and number of selected clients.

    With ``relative_target`` every run goes the full ``max_rounds`` and the
    target at each count is that fraction of the lowest final accuracy among
    the scenarios; otherwise each config's ``training.target_accuracy`` is used.
    """
    rows = []
    for count in counts:
        histories = {}
        for cfg in cfgs:
            n = cfg.topology.num_clients
            if not 1 <= count <= n:
                log.warning("%s: %d selected clients is infeasible for %d clients", cfg.name, count, n)
                histories[cfg.name] = None
                continue
            c = cfg.with_selection_count(count)
            if relative_target is not None:
                c = c.with_overrides(training={"target_accuracy": None})
            histories[cfg.name] = run_experiment(c)
        if relative_target is not None:
            finals = [h[-1].global_accuracy for h in histories.values() if h]
            target = relative_target * min(finals) if finals else None
        for cfg in cfgs:
            h = histories[cfg.name]
            tgt = target if relative_target is not None else cfg.training.target_accuracy
            if h is None or tgt is None:
                rows.append(SweepRow(cfg.name, count, None, None, False))
                continue
            rounds = rounds_to_target(h, tgt)
            rows.append(SweepRow(cfg.name, count, rounds, delay_to_target(h, tgt), rounds is not None))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return _csv_text(SWEEP_COLUMNS, ((r.scenario, r.clients, r.rounds_to_target,
                                      r.delay_to_target_s, r.reached) for r in rows))


# ---------------------------------------------------------------------------
# comparison

@dataclass
class Trace:
    rounds: list[int]
    accuracy: list[float]
    cumulative_delay: list[float]


def read_trace(path: str | os.PathLike) -> Trace:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != ROUND_COLUMNS:
        raise SchemaError(f"{path}: header must be {','.join(ROUND_COLUMNS)}")
    tr = Trace([], [], [])
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(ROUND_COLUMNS):
            raise SchemaError(f"{path}:{lineno}: expected {len(ROUND_COLUMNS)} fields")
        try:
            counts = [int(row[i]) for i in (0, 3, 4, 5)]
            reals = [float(row[i]) for i in (1, 2, 6, 7, 8)]
        except ValueError:
            raise SchemaError(f"{path}:{lineno}: non-numeric field") from None
        tr.rounds.append(counts[0])
        tr.accuracy.append(reals[1])
        tr.cumulative_delay.append(reals[4])
    if not tr.rounds:
        raise SchemaError(f"{path}: no data rows")
    if tr.rounds != sorted(set(tr.rounds)):
        raise SchemaError(f"{path}: rounds must be strictly increasing")
    return tr


def crossover_round(a: Sequence[float], b: Sequence[float], rounds: Sequence[int]) -> Optional[int]:
    """First round >= 1 at which ``a`` meets or exceeds ``b`` (round 0 is the shared initial model)."""
    for r, x, y in zip(rounds, a, b):
        if r >= 1 and x >= y:
            return r
    return None


def _first_delay(tr: Trace, target: float) -> Optional[float]:
    for r, acc, d in zip(tr.rounds, tr.accuracy, tr.cumulative_delay):
        if r >= 1 and acc >= target:
            return d
    return None


@dataclass
class ComparisonReport:
    final_accuracy_a: float
    final_accuracy_b: float
    reference_round: int
    accuracy_gap_pp: float
    accuracy_gap_relative: float
    crossover_round: Optional[int]
    target_accuracy: float
    delay_to_target_a_s: Optional[float]
    delay_to_target_b_s: Optional[float]
    delay_ratio: Optional[float]
    sweep_delay_ratios: dict[int, Optional[float]] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"{k}={fmt(v) if v is not None else 'none'}" for k, v in vars(self).items()
                 if k != "sweep_delay_ratios"]
        for count, ratio in sorted(self.sweep_delay_ratios.items()):
            lines.append(f"sweep_delay_ratio.{count}={fmt(ratio) if ratio is not None else 'none'}")
        return "\n".join(lines) + "\n"


def compare_traces(a: Trace, b: Trace, relative_target: float = 0.9) -> ComparisonReport:
    """Compare scenario A (e.g. MT-HFL) against baseline B on their common rounds.

    Gaps are A minus B at the last common round; the delay ratio is B's delay
    to the target over A's, the target being ``relative_target`` times the
    lower of the two final accuracies.
    """
    common = sorted(set(a.rounds) & set(b.rounds))
    if not common:
        raise SchemaError("traces share no round indices")
    ia = {r: i for i, r in enumerate(a.rounds)}
    ib = {r: i for i, r in enumerate(b.rounds)}
    acc_a = [a.accuracy[ia[r]] for r in common]
    acc_b = [b.accuracy[ib[r]] for r in common]
    fa, fb = acc_a[-1], acc_b[-1]
    target = relative_target * min(fa, fb)
    da, db = _first_delay(a, target), _first_delay(b, target)
    return ComparisonReport(
        final_accuracy_a=fa, final_accuracy_b=fb, reference_round=common[-1],
        accuracy_gap_pp=100.0 * (fa - fb),
        accuracy_gap_relative=(fa - fb) / fb if fb > 0 else 0.0,
        crossover_round=crossover_round(acc_a, acc_b, common),
        target_accuracy=target, delay_to_target_a_s=da, delay_to_target_b_s=db,
        delay_ratio=db / da if da and db is not None else None,
    )


def read_sweep(path: str | os.PathLike) -> list[SweepRow]:
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    if tuple(next(reader, ())) != SWEEP_COLUMNS:
        raise SchemaError(f"{path}: header must be {','.join(SWEEP_COLUMNS)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        try:
            name, clients, rtt, dtt, reached = row
            rows.append(SweepRow(name, int(clients), int(rtt) if rtt else None,
                                 float(dtt) if dtt else None, reached == "true"))
        except ValueError:
            raise SchemaError(f"{path}:{lineno}: malformed sweep row") from None
    return rows


def sweep_ratios(rows: Sequence[SweepRow]) -> dict[int, Optional[float]]:
    """Per client count, delay of the second scenario listed over the first."""
    names = list(dict.fromkeys(r.scenario for r in rows))
    if len(names) != 2:
        raise SchemaError(f"sweep must hold exactly two scenarios, found {names}")
    first, second = names
    out = {}
    for count in sorted({r.clients for r in rows}):
        by = {r.scenario: r for r in rows if r.clients == count}
        a, b = by.get(first), by.get(second)
        ok = a and b and a.reached and b.reached and a.delay_to_target_s
        out[count] = b.delay_to_target_s / a.delay_to_target_s if ok else None
    return out


def compare(csv_a: str | os.PathLike, csv_b: str | os.PathLike,
            sweep: Optional[str | os.PathLike] = None) -> ComparisonReport:
    report = compare_traces(read_trace(csv_a), read_trace(csv_b))
    if sweep is not None:
        report.sweep_delay_ratios = sweep_ratios(read_sweep(sweep))
    return report


# ---------------------------------------------------------------------------
# entry point

def _load(spec: str, seed: Optional[int], full_scale: bool) -> ExperimentConfig:
    if spec in PRESETS and not Path(spec).exists():
        cfg = load_preset(spec)
    else:
        try:
            cfg = parse_config(Path(spec).read_text(encoding="utf-8"))
        except OSError as exc:
            raise MTHFLError(f"cannot read config {spec}: {exc}") from None
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return cfg.scaled_up() if full_scale else cfg


def _counts(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--clients expects comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mthfl", description=__doc__)
    p.add_argument("--seed", type=int, help="override experiment.seed")
    p.add_argument("--out-dir", default=".", help="directory for output files (default: .)")
    p.add_argument("--full-scale", action="store_true", help="apply the config's full_scale section")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario and write <name>.csv")
    r.add_argument("config", help=f"config file or preset name ({', '.join(PRESETS)})")

    s = sub.add_parser("sweep", help="delay to target accuracy versus selected-client count")
    s.add_argument("configs", nargs="+", help="config files or preset names")
    s.add_argument("--clients", type=_counts, required=True, help="e.g. 50,100,200")
    s.add_argument("--relative-target", type=float, default=None,
                   help="target = this fraction of the lowest final accuracy at each count")
    s.add_argument("--output", default="sweep.csv")

    c = sub.add_parser("compare", help="compare two run CSVs (scenario A vs baseline B)")
    c.add_argument("csv_a")
    c.add_argument("csv_b")
    c.add_argument("--sweep", help="optional sweep CSV for per-count delay ratios")
    c.add_argument("--output", default="comparison.txt")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = Path(args.out_dir)
    try:
        if args.command == "run":
            cfg = _load(args.config, args.seed, args.full_scale)
            path = run_scenario(cfg, out_dir / f"{cfg.name}.csv")
        elif args.command == "sweep":
            cfgs = [_load(c, args.seed, args.full_scale) for c in args.configs]
            rows = sweep_clients(cfgs, args.clients, args.relative_target)
            path = write_atomic(out_dir / args.output, sweep_csv(rows))
        else:
            report = compare(args.csv_a, args.csv_b, args.sweep)
            path = write_atomic(out_dir / args.output, report.to_text())
    except (MTHFLError, OSError) as exc:
        print(f"mthfl: error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
