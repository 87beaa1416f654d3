"""Command-line front end.

Subcommands: calibrate, run, roc, pamr, hist1d, validate.
Exit codes: 0 success, 1 validation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config
from .engine import chi2_first_hit, validate_1d, write_histogram_csv
from .core import first_hit_cdf_1d
from .link import calibrate_signatures, run_link
from .metrics import scheme_pamr, snr_sweep, write_pamr_csv, write_roc_csv, write_ser_csv
from .modulation import SCHEMES
from .receiver import SignatureTable

log = logging.getLogger("cvdsim")


class UsageError(Exception):
    pass


def _header(cfg: ExperimentConfig, detector: bool = False) -> str:
    head = f"fingerprint={cfg.fingerprint()} seed={cfg.seed}"
    if detector:
        # receiver policy travels with every SER/ROC file
        alphas = ",".join(f"{n}:{cfg.alpha_for(n):g}" for n in cfg.schemes)
        head += f" dfe={cfg.dfe} alpha={alphas} first_slot=unfiltered"
        if any(SCHEMES[n][0] == "mfsk" for n in cfg.schemes):
            head += f" mfsk_sync=lag_search_L{cfg.sync_window}"
    return head


def _load_config(args) -> ExperimentConfig:
    text, source = "", "<defaults>"
    if args.config:
        source = args.config
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for flag, key in (("snr", "snr_db"), ("scheme", "schemes"), ("nsym", "n_sym"), ("reps", "repetitions"),
                      ("seed", "seed"), ("workers", "workers"), ("out", "output_dir"),
                      ("pilot_reps", "pilot_repetitions"), ("dfe", "dfe")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    return parse_config(text, overrides, source)


def _table_path(args, cfg: ExperimentConfig, name: str) -> Path:
    base = Path(args.signatures) if getattr(args, "signatures", None) else Path(cfg.output_dir)
    return base / f"signatures_{name}.csv"


def _load_table(args, cfg: ExperimentConfig, name: str) -> SignatureTable:
    path = _table_path(args, cfg, name)
    if not path.exists():
        raise UsageError(f"missing signature file {path}; run 'cvdsim calibrate' with the same config first")
    table = SignatureTable.load(path)
    expected = cfg.for_scheme(name).channel_fingerprint()
    if table.fingerprint != expected:
        raise UsageError(f"{path} was calibrated for a different channel ({table.fingerprint} != {expected}); "
                         "rerun 'cvdsim calibrate'")
    return table


def cmd_calibrate(args, cfg: ExperimentConfig) -> int:
    out = _table_path(args, cfg, "x").parent
    out.mkdir(parents=True, exist_ok=True)
    for name in cfg.schemes:
        table = calibrate_signatures(cfg.for_scheme(name))
        path = _table_path(args, cfg, name)
        table.save(path)
        print(f"{name}: wrote {path}")
    return 0


def cmd_run(args, cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = []
    for name in cfg.schemes:
        table = _load_table(args, cfg, name)
        res = snr_sweep(cfg.for_scheme(name), table=table)
        points += res.points
    path = out / "ser.csv"
    write_ser_csv(path, points, _header(cfg, detector=True))
    print(f"wrote {path}")
    return 0


def cmd_roc(args, cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    snrs = tuple(float(x) for x in args.roc_snr.split(",")) if args.roc_snr else cfg.snr_db
    rocs = {}
    for name in cfg.schemes:
        scfg = cfg.for_scheme(name)
        if scfg.modulation().n_symbols != 2:
            log.warning("skipping %s: ROC needs a binary scheme", name)
            continue
        table = _load_table(args, cfg, name)
        res = snr_sweep(scfg, snr_db=snrs, table=table, roc_snrs=snrs)
        for snr, pts in res.roc.items():
            rocs[(name, snr)] = pts
    path = out / "roc.csv"
    write_roc_csv(path, rocs, _header(cfg, detector=True))
    print(f"wrote {path}")
    return 0


def cmd_pamr(args, cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pamrs = {name: scheme_pamr(cfg, name) for name in cfg.schemes}
    path = out / "pamr.csv"
    write_pamr_csv(path, pamrs, _header(cfg))
    for name, v in pamrs.items():
        print(f"{name}: PAMR = {v:.6f}")
    return 0


def cmd_hist1d(args, cfg: ExperimentConfig) -> int:
    hist = validate_1d(args.r0, args.D if args.D is not None else cfg.D, args.dt, args.particles, args.horizon,
                       bins=args.bins, seed=cfg.seed, workers=cfg.workers)
    stat, dof, p = chi2_first_hit(hist)
    analytic = float(first_hit_cdf_1d(hist.r0, hist.horizon, hist.D))
    out = Path(args.output) if args.output else Path(cfg.output_dir) / "hist1d.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    header = (f"{_header(cfg)} r0={args.r0} D={hist.D} dt={args.dt} particles={args.particles} "
              f"horizon={args.horizon} chi2={stat:.3f} dof={dof} p={p:.6f}")
    write_histogram_csv(out, hist, header, analytic=True)
    print(f"wrote {out}")
    print(f"chi2 = {stat:.2f} on {dof} dof, p = {p:.4f}; hit fraction {hist.hit_fraction:.5f} "
          f"vs analytic {analytic:.5f}")
    return 0


def run_validation(cfg: ExperimentConfig, particles: int = 20000, n_sym: int = 40) -> list[tuple[str, bool, str]]:
    """Reduced-size invariant checks: 1-D oracle, conservation, determinism across worker counts."""
    checks = []
    hist = validate_1d(1.0, 79.4, 1e-5, particles, 0.1, bins=30, seed=cfg.seed, workers=cfg.workers)
    _, _, p = chi2_first_hit(hist)
    analytic = float(first_hit_cdf_1d(1.0, 0.1, 79.4))
    se = np.sqrt(analytic * (1 - analytic) / particles)
    checks.append(("1-D first-passage chi2", p > 0.01, f"p = {p:.4f}"))
    z = (hist.hit_fraction - analytic) / se
    checks.append(("1-D cumulative hit fraction", abs(z) < 3, f"z = {z:+.2f}"))
    small = cfg.for_scheme("bcsk").replace(n_sym=n_sym)
    a = run_link(small, cfg.seed, workers=1)
    checks.append(("conservation", a.n_received + a.n_free == a.n_emitted,
                   f"{a.n_received} + {a.n_free} vs {a.n_emitted}"))
    b = run_link(small, cfg.seed, workers=4)
    same = np.array_equal(a.received, b.received) and np.array_equal(a.symbols, b.symbols)
    checks.append(("determinism across workers", same, "workers 1 vs 4"))
    return checks


def cmd_validate(args, cfg: ExperimentConfig) -> int:
    checks = run_validation(cfg, particles=args.particles, n_sym=args.nsym_validate)
    ok = True
    for name, passed, detail in checks:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    common.add_argument("--snr", help="comma-separated SNR list in dB")
    common.add_argument("--scheme", help="comma-separated schemes (ook, bcsk, qcsk, bmfsk, qmfsk)")
    common.add_argument("--nsym", type=int)
    common.add_argument("--reps", type=int)
    common.add_argument("--pilot-reps", dest="pilot_reps", type=int)
    common.add_argument("--dfe", choices=("on", "off", "both"))
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--signatures", help="directory holding signatures_<scheme>.csv (default: --out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cvdsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="pilot-run signatures for each scheme")
    sub.add_parser("run", parents=[common], help="SNR sweep -> ser.csv")
    roc = sub.add_parser("roc", parents=[common], help="ROC curves -> roc.csv")
    roc.add_argument("--roc-snr", dest="roc_snr", default="3,9", help="SNRs for ROC curves (default 3,9)")
    sub.add_parser("pamr", parents=[common], help="equiprobable-stream PAMR -> pamr.csv")
    h = sub.add_parser("hist1d", parents=[common], help="1-D first-passage histogram with analytic overlay")
    h.add_argument("--r0", type=float, default=1.0)
    h.add_argument("--D", type=float)
    h.add_argument("--dt", type=float, default=1e-5)
    h.add_argument("--particles", type=int, default=100000)
    h.add_argument("--horizon", type=float, default=0.1)
    h.add_argument("--bins", type=int, default=50)
    h.add_argument("--output", help="CSV path (default <out>/hist1d.csv)")
    v = sub.add_parser("validate", parents=[common], help="invariant oracle suite")
    v.add_argument("--particles", type=int, default=20000)
    v.add_argument("--nsym-validate", dest="nsym_validate", type=int, default=40)
    return p


COMMANDS = {"calibrate": cmd_calibrate, "run": cmd_run, "roc": cmd_roc, "pamr": cmd_pamr,
            "hist1d": cmd_hist1d, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"cvdsim {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
