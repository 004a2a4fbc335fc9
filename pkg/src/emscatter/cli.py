"""Command-line driver.

    emscatter COMMAND [--config FILE] [--out DIR] [--threads N]

Exit codes: 0 ok, 2 configuration error, 3 numeric failure,
4 coverage or precondition failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import artifacts as art
from .asymptotics import QuadratureError, asymptotic_batch, finite_energy_batch
from .bounds import DomainError, bounds, default_R, thresholds
from .config import ConfigError, RunConfig
from .counterexample import CounterexampleError, build_bundle, f_tilde, verify_equality
from .dynamics import Controls, IntegrationError, scattering_batch
from .inversion import (CoverageError, EnergySweep, check_ladder, extract_limits, parallel_map,
                        reconstruct_from_a, reconstruct_V_from_b, run_sweep)
from .picard import PicardError, check_theorem_estimates, smallest_admissible_offset
from .xray import CoverageError as XrayCoverageError

log = logging.getLogger("emscatter")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PRECONDITION = 0, 2, 3, 4
COMMANDS = ("simulate", "asymptotics", "bounds", "invert", "counterexample", "verify-theorem31")


class NumericFailure(RuntimeError):
    pass


class Run:
    """Config, output directory and thread count shared by the commands."""

    def __init__(self, command: str, cfg: RunConfig, out: Path, threads: int = 1):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.threads = max(1, int(threads))
        self.written: list[Path] = []

    @property
    def header(self) -> str:
        return art.header_line(self.command, self.cfg.digest, self.cfg.seed)

    def path(self, name: str) -> Path:
        return self.out / name

    def table(self, name, columns, rows):
        self.written.append(art.write_table(self.path(name), self.header, columns, rows))

    def json(self, name, payload):
        self.written.append(art.write_json(self.path(name), payload, self.cfg.digest, self.cfg.seed))

    def grid(self, name, grid):
        self.written.append(art.write_grid(self.path(name), grid, self.header))

    def sinogram(self, name, sino):
        self.written.append(art.write_sinogram(self.path(name), sino, self.header))

    @property
    def controls(self) -> Controls:
        t = self.cfg.tolerances
        return Controls(rtol=t["rtol"], atol=t["atol"])


def _batched(run: Run, fn, n_items: int, chunk: int = 2048):
    jobs = [slice(lo, lo + chunk) for lo in range(0, n_items, chunk)]
    return jobs, parallel_map(fn, jobs, run.threads)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(run: Run) -> int:
    field = run.cfg.build_field()
    thetas, xs = run.cfg.line_set()
    n = field.n
    if thetas.shape[1] != n:
        raise ConfigError(f"lines are {thetas.shape[1]}-dimensional but the field is {n}-dimensional")
    cols = (["s"] + art.vector_columns("theta", n) + art.vector_columns("x", n) + art.vector_columns("a_sc", n)
            + art.vector_columns("b_sc", n) + ["energy_drift", "fit_residual", "max_angle", "flagged"])
    rows = []
    for s in run.cfg.ladder:
        jobs, res = _batched(run, lambda sl: scattering_batch(field, s * thetas[sl], xs[sl], run.controls),
                             len(thetas))
        for sl, (a, b, drift, resid, angle, flag) in zip(jobs, res):
            for k in range(a.shape[0]):
                j = sl.start + k
                rows.append([s, *thetas[j], *xs[j], *a[k], *b[k], drift[k], resid[k], angle[k], bool(flag[k])])
    run.table("scattering.csv", cols, rows)
    return EXIT_OK


def cmd_asymptotics(run: Run) -> int:
    field = run.cfg.build_field()
    thetas, xs = run.cfg.line_set()
    n = field.n
    W = asymptotic_batch(field, thetas, xs, estimate_error=True)
    if np.max(W["error"]) > run.cfg.tolerances["quadrature"] * 1e4:
        log.warning("quadrature error estimate %.3g", float(np.max(W["error"])))
    cols = (art.vector_columns("theta", n) + art.vector_columns("x", n)
            + sum((art.vector_columns(k, n) for k in ("W11", "W12", "W21", "W22")), []) + ["error"])
    rows = [[*thetas[j], *xs[j], *W["W11"][j], *W["W12"][j], *W["W21"][j], *W["W22"][j], W["error"][j]]
            for j in range(len(thetas))]
    run.table("limits.csv", cols, rows)

    rows = []
    for s in run.cfg.ladder:
        w = finite_energy_batch(field, thetas, xs, np.full(len(thetas), s))
        for j in range(len(thetas)):
            rows.append([s, *thetas[j], *xs[j], *w["w1"][j], *w["w2"][j], *w["born1"][j], *w["born2"][j]])
    cols = (["s"] + art.vector_columns("theta", n) + art.vector_columns("x", n)
            + sum((art.vector_columns(k, n) for k in ("w1", "w2", "born1", "born2")), []))
    run.table("finite_energy.csv", cols, rows)
    return EXIT_OK


def cmd_bounds(run: Run) -> int:
    field = run.cfg.build_field()
    d = field.decay
    sec = run.cfg.bounds
    r = float(sec["r"])
    trows, brows, bcols = [], [], None
    for xn in sec["offsets"]:
        xn = float(xn)
        R = default_R(field.n, d.alpha, d.beta1, xn) if sec["R"] is None else float(sec["R"])
        z = thresholds(field.n, d.alpha, d.beta1, d.beta2, R, r, xn)
        trows.append([xn, R, r, z.z1, z.z2, z.z3, z.speed])
        # default: 20 speeds from the admissibility threshold up by a factor 100
        speeds = [float(s) for s in sec["speeds"]] or list(np.geomspace(z.speed, 100 * z.speed, 20))
        for s in speeds:
            if s <= math.sqrt(2) * R:
                log.info("skipping |v| = %g <= sqrt(2) R at |x| = %g", s, xn)
                continue
            row = bounds(field.n, d.alpha, d.beta1, d.beta2, s, xn, R, r).as_row()
            row["admissible"] = bool(s >= max(z.z1, z.z2) and s > z.z3)
            bcols = bcols or list(row)
            brows.append([row[c] for c in bcols])
    run.table("thresholds.csv", ["offset", "R", "r", "z1", "z2", "z3", "min_speed"], trows)
    if bcols:
        run.table("bounds.csv", bcols, brows)
    return EXIT_OK


def _fan(cfg: RunConfig):
    L = cfg.lines
    if L["kind"] != "fan" or L.get("full_circle"):
        raise ConfigError("invert needs a half-circle fan line set")
    return int(L["angles"]), int(L["offsets"]), float(L["max_offset"])


def _load_sweep(run: Run, J, I, Q, ladder):
    """Sweep from the cached CSV when it was produced by the same config."""
    path = run.path("sweep.csv")
    if path.exists():
        try:
            meta, cols, data = art.read_table(path)
        except (ValueError, IndexError):
            meta = {}
        if meta.get("config_sha256") == run.cfg.digest:
            S, Lc = len(ladder), J * I
            data = data.reshape(S, Lc, -1)
            log.info("reusing cached sweep %s", path)
            return EnergySweep(J, I, Q, ladder, data[..., 1:3], data[..., 3:5], data[..., 5] > 0.5)
    return None


def cmd_invert(run: Run) -> int:
    field = run.cfg.build_field()
    if field.n != 2:
        raise ConfigError("invert is implemented for n = 2")
    J, I, Q = _fan(run.cfg)
    try:
        ladder = check_ladder(run.cfg.ladder, minimum=3)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sec = run.cfg.invert
    sweep = _load_sweep(run, J, I, Q, ladder)
    if sweep is None:
        sweep = run_sweep(field, J, I, Q, ladder, run.controls, chunk=4096, threads=run.threads)
        rows = [[s, *sweep.a[si, j], *sweep.b[si, j], bool(sweep.flagged[si, j])]
                for si, s in enumerate(ladder) for j in range(J * I)]
        run.table("sweep.csv", ["s", "a_sc_1", "a_sc_2", "b_sc_1", "b_sc_2", "flagged"], rows)
    lim = extract_limits(sweep, tol=run.cfg.tolerances["extrapolation"])
    report = reconstruct_from_a((sweep, lim), float(sec["L"]), int(sec["resolution"]), truth=field,
                                window=sec["window"], max_flagged=float(sec["max_flagged"]))
    payload = {"reconstruct_from_a": report.summary()}
    run.grid("B12.csv", report.recon["B12"])
    run.grid("gradV.csv", report.recon["gradV"])
    if sec["recover_V"]:
        rv = reconstruct_V_from_b((sweep, lim), field, float(sec["L"]), int(sec["resolution"]), truth=field,
                                  window=sec["window"], max_flagged=float(sec["max_flagged"]))
        payload["reconstruct_V_from_b"] = rv.summary()
        run.grid("V.csv", rv.recon["V"])
    run.json("report.json", payload)
    return EXIT_OK


def cmd_counterexample(run: Run) -> int:
    sec = run.cfg.counterexample
    bundle = build_bundle(int(sec["nodes"]), int(sec["J"]), int(sec["I"]), float(sec["Q"]), float(sec["L"]),
                          int(sec["resolution"]))
    rep = verify_equality(bundle, int(sec["verify_angles"]), int(sec["verify_offsets"]))
    p1, p2 = bundle.profiles[1], bundle.profiles[2]
    r = np.linspace(0.0, max(p1.support, p2.support), 1001)
    run.table("profiles.csv", ["r", "f1", "f2", "F1", "F2"],
              zip(r, p1(r), p2(r), p1.F(r), p2.F(r)))
    q = np.linspace(-5.5, 5.5, 1101)
    run.table("ftilde.csv", ["q", "ftilde1", "ftilde2"], zip(q, f_tilde(1, q), f_tilde(2, q)))
    run.grid("V_grid.csv", bundle.V_grid)
    ok = (bundle.certificates["B_diff_sup"] > 0.1 * bundle.certificates["B1_sup"]
          and rep.max_residual <= 1e-6)
    run.json("report.json", {"certificates": bundle.certificates, "equality": rep.as_dict(), "passed": ok})
    return EXIT_OK if ok else EXIT_NUMERIC


def _theorem_data(run: Run, field):
    """(speed, offset, angle) triples: listed data plus seeded random samples."""
    sec = run.cfg.theorem
    out = []
    for item in sec["data"]:
        s = float(item["speed"])
        off = item.get("offset", "auto")
        off = 1.01 * smallest_admissible_offset(field, s) if off == "auto" else float(off)
        out.append((s, off, float(item.get("angle", 0.0))))
    k = int(sec["samples"])
    if k:
        rng = np.random.default_rng(run.cfg.seed)
        lo, hi = (float(v) for v in sec["speed_range"])
        for _ in range(k):
            s = float(np.exp(rng.uniform(math.log(lo), math.log(hi))))
            base = smallest_admissible_offset(field, s)
            out.append((s, base * float(rng.uniform(1.01, 1.5)), float(rng.uniform(0, 2 * math.pi))))
    return out


def cmd_verify_theorem31(run: Run) -> int:
    field = run.cfg.build_field()
    if field.n != 2:
        raise ConfigError("verify-theorem31 data are specified in the plane")
    rows = []
    all_ok, all_adm = True, True
    for idx, (s, off, ang) in enumerate(_theorem_data(run, field)):
        th = np.array([math.cos(ang), math.sin(ang)])
        v, x = s * th, off * np.array([th[1], -th[0]])
        chk = check_theorem_estimates(field, v, x, controls=run.controls)
        all_adm &= chk.admissible
        all_ok &= chk.passed
        for q in chk.inequalities:
            rows.append([idx, s, off, ang, bool(chk.admissible), q.name.replace(" ", "_"), q.lhs, q.rhs,
                         bool(q.holds)])
    run.table("theorem31.csv", ["datum", "speed", "offset", "angle", "admissible", "inequality", "lhs", "rhs",
                                "holds"], rows)
    if not all_adm:
        print("some data are below the thresholds", file=sys.stderr)
        return EXIT_PRECONDITION
    return EXIT_OK if all_ok else EXIT_NUMERIC


HANDLERS = {
    "simulate": cmd_simulate,
    "asymptotics": cmd_asymptotics,
    "bounds": cmd_bounds,
    "invert": cmd_invert,
    "counterexample": cmd_counterexample,
    "verify-theorem31": cmd_verify_theorem31,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emscatter", description="Electromagnetic scattering workbench")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(command: str, cfg: RunConfig, out=None, threads: int = 1) -> int:
    """Execute one command; returns the exit status."""
    if command not in HANDLERS:
        print(f"unknown command {command!r}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out if out is not None else cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    r = Run(command, cfg, out, threads)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return HANDLERS[command](r)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CoverageError, XrayCoverageError, DomainError) as exc:
        print(f"precondition failure: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (IntegrationError, PicardError, QuadratureError, CounterexampleError, NumericFailure,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, cfg, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
