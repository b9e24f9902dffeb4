"""Command-line driver.

Examples
--------
    optofb --mode fig1 --out fig1.csv
    optofb --mode spectra --set thetas=0,0.7853981633974483,1.5707963267948966
    optofb --mode optimize --set temperatures=300,70,4 --format json
    optofb --mode verify --out report.json

Exit status: 0 success, 2 usage error, 3 physically invalid input,
4 verification failure (the report is still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import report as _report
from . import spectra
from .config import (RunConfig, UsageError, build_run_config, parse_pairs,
                     read_config_file)
from .model import ConfigError, QNDConditionError, SplitTemperatureError, derive_params
from .oracle import SingularLoopError
from .spectra import ClosedLoopSingularError, FeedbackSetting

log = logging.getLogger("optofb")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PHYSICS = 3
EXIT_VERIFY = 4

LAMBDA_UNIT = "A^-1 s^-1/2"

SPECTRA_COLUMNS = (
    ("omega", "rad/s"), ("theta", "rad"), ("T", "K"), ("lambda_used", LAMBDA_UNIT),
    ("S_psi", "s"), ("S_X_intra", "shot"), ("S_X_out", "shot"), ("S_X0_out", "shot"),
    ("S_Iout", "A^2 s"), ("S_cond", "shot"), ("product_46", "1"), ("product_47", "1"),
    ("C_psi_xin", "s^1/2"), ("C_psi_it", "A s"), ("C_x0out_iout", "A s^1/2"))

_COMPLEX = {"C_psi_xin", "C_psi_it", "C_x0out_iout"}


class Table:
    def __init__(self, columns: Sequence[str], rows: list, meta: Optional[dict] = None):
        self.columns = list(columns)
        self.rows = rows
        self.meta = meta or {}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"columns": self.columns, "rows": [[_jsonable(v) for v in r] for r in self.rows]}
        if self.meta:
            doc["meta"] = _jsonable(self.meta)
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, str)) or v is None:
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, complex):
        return [_jsonable(v.real), _jsonable(v.imag)]
    x = float(v)
    return x if math.isfinite(x) else repr(x)


def _header(name: str, unit: str) -> str:
    return f"{name}[{unit}]"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_spectra(rc: RunConfig) -> Table:
    """Every row field for each (omega, theta, T); omega outermost."""
    omega = rc.grid.values()
    fb = rc.feedback_setting()
    temps = rc.temperature_list()
    blocks = {}
    for T in temps:
        dp = derive_params(rc.physical_at(T))
        lam = fb.gains(omega, dp)
        for th in rc.thetas:
            blocks[th, T] = spectra.closed_form_rows(omega, th, lam, dp)
    cols = []
    for name, unit in SPECTRA_COLUMNS:
        if name in _COMPLEX:
            cols += [_header(f"Re_{name}", unit), _header(f"Im_{name}", unit)]
        else:
            cols.append(_header(name, unit))
    rows = []
    for i in range(omega.size):
        for th in rc.thetas:
            for T in temps:
                r = blocks[th, T][i]
                out = []
                for name, _ in SPECTRA_COLUMNS:
                    v = T if name == "T" else getattr(r, name)
                    out += [v.real, v.imag] if name in _COMPLEX else [v]
                rows.append(out)
    return Table(cols, rows, {"feedback": str(fb)})


def cmd_fig1(rc: RunConfig) -> Table:
    """Amplitude-quadrature output spectrum under feedback, one column per
    temperature, hottest first."""
    omega = rc.grid.values()
    fb = rc.feedback_setting()
    temps = sorted(rc.temperature_list(), reverse=True)
    cols = [_header("omega", "rad/s")]
    data = [omega]
    for T in temps:
        dp = derive_params(rc.physical_at(T))
        lam = fb.gains(omega, dp)
        cols += [_header(f"S_X0_out_{T:g}K", "shot"), _header(f"lambda_{T:g}K", LAMBDA_UNIT)]
        data += [spectra.s_x0_out_fb(omega, lam, dp), lam]
    rows = [list(r) for r in zip(*data)]
    return Table(cols, rows, {"feedback": str(fb), "temperatures": temps})


def cmd_optimize(rc: RunConfig) -> Table:
    """Optimal gain, resulting minimum spectrum, significance ratio and
    squeezing bandwidth per temperature."""
    omega = rc.grid.values()
    temps = rc.temperature_list()
    cols = [_header("omega", "rad/s"), _header("T", "K"), _header("lambda_opt", LAMBDA_UNIT),
            _header("S_min", "shot"), _header("significance", "1"),
            _header("band_lo", "rad/s"), _header("band_hi", "rad/s"),
            _header("bandwidth", "rad/s")]
    per_T = {}
    bands = {}
    for T in temps:
        dp = derive_params(rc.physical_at(T))
        lam = spectra.lambda_opt(omega, dp)
        S = spectra.s_x0_out_fb(omega, lam, dp)
        sig = spectra.squeezing_significance(omega, dp)
        per_T[T] = (lam, S, sig)
        bands[T] = spectra.squeezing_bandwidth(omega, S, rc.epsilon)
    rows = []
    for i in range(omega.size):
        for T in temps:
            lam, S, sig = per_T[T]
            rows.append([omega[i], T, lam[i], S[i], sig[i], *bands[T]])
    meta = {"epsilon": rc.epsilon,
            "bandwidth": {repr(float(T)): list(bands[T]) for T in temps}}
    return Table(cols, rows, meta)


def cmd_verify(rc: RunConfig) -> _report.VerificationReport:
    return _report.verify(rc.physical, rc.grid.values(), rc.thetas,
                          rc.temperature_list(), rc.feedback_setting(), seed=rc.seed,
                          rel_tol=rc.rel_tol, mc_realizations=rc.mc_realizations,
                          mc_points=rc.mc_points)


COMMANDS = {"spectra": cmd_spectra, "fig1": cmd_fig1, "optimize": cmd_optimize}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="optofb",
        description="Quantum noise spectra of a piezoelectric-readout cavity with "
                    "electro-optic feedback.")
    ap.add_argument("--config", metavar="PATH", help="key=value config file")
    ap.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--mode", choices=("spectra", "fig1", "optimize", "verify"))
    ap.add_argument("--lambda", dest="feedback", metavar="off|fixed:V|opt|opt-at:W",
                    help="feedback gain policy")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE", help="override a config key (repeatable)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_run_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    values.update(parse_pairs(args.overrides, source="--set"))
    for key in ("out", "format", "seed", "mode"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.feedback is not None:
        try:
            values["feedback"] = FeedbackSetting.parse(args.feedback)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return build_run_config(values)


def _emit(text: str, rc: RunConfig) -> None:
    path = rc.output_path()
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_run_config(args)
    except (UsageError, OSError) as exc:
        print(f"optofb: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"optofb: invalid physical parameters: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (TypeError, ValueError) as exc:
        print(f"optofb: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if rc.mode == "verify":
            rep = cmd_verify(rc)
            _emit(json.dumps(_jsonable(rep.to_dict()), sort_keys=True, indent=1) + "\n", rc)
            if not rep.overall:
                print("optofb: verification failed: " + ", ".join(rep.failed()),
                      file=sys.stderr)
                return EXIT_VERIFY
            return EXIT_OK
        table = COMMANDS[rc.mode](rc)
    except (ConfigError, QNDConditionError, SplitTemperatureError,
            ClosedLoopSingularError, SingularLoopError) as exc:
        print(f"optofb: refused: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    _emit(table.to_json() if rc.format == "json" else table.to_csv(), rc)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
