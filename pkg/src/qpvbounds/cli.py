"""Batch command-line front end.

Subcommands:

  sweep        solve a p_err grid, emit the certified curve as CSV
  pwin         bisect for the winning-probability upper bound
  bounds       relaxed sweep -> w~ -> counting margins -> error lower bound
  strategies   mixture curve of explicit attacks plus the gap to the SDP
  export-sdpa  write one materialized game in sparse SDPA format
  dump-bases   print the discretized measurement bases

Options come from flags and/or a flat ``key = value`` config file (flags
win).  Exit codes: 0 success, 1 bad configuration or infeasible parameters,
2 solver-failure quota exceeded, 3 curve monotonicity violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

from qpvbounds.backend import SolverSettings, certified_upper, solve
from qpvbounds.bloch import family
from qpvbounds.bounds import (
    Curve,
    InfeasibleParameters,
    attacker_error_lower_bound,
    eta_threshold,
    sweep_curve,
    tomamichel_bound,
    w_tilde,
)
from qpvbounds.games import GameSpec, compile_game, materialize
from qpvbounds.npa import LEVELS
from qpvbounds.sdpa import write_sdpa
from qpvbounds.strategies import best_always_answer, evaluate, mixed_curve, optimal_bb84

FAIL_QUOTA = 0.10
MONO_TOL = 1e-6
SWEEP_COLUMNS = (
    "p_err",
    "p_ans_upper",
    "level",
    "variant",
    "m",
    "m_theta",
    "m_phi",
    "xi",
    "solver_status",
)


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration plumbing
# --------------------------------------------------------------------------


def load_config(path: Path) -> dict[str, str]:
    """Parse a flat 'key = value' file; '#' starts a comment."""
    opts: dict[str, str] = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        opts[key.strip().lower().replace("-", "_")] = val.strip()
    return opts


def _as_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _resolve(args: argparse.Namespace, cfg: dict[str, str], key: str, cast, default):
    """Flag value if given, else config file value, else default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in cfg:
        try:
            return cast(cfg[key])
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key}: {exc}") from exc
    return default


def _game_spec(args: argparse.Namespace, cfg: dict[str, str], variant_default: str = "qpv") -> GameSpec:
    variant = _resolve(args, cfg, "variant", str, variant_default)
    m_theta = _resolve(args, cfg, "m_theta", int, 2)
    m_phi = _resolve(args, cfg, "m_phi", int, 1)
    xi = _resolve(args, cfg, "xi", float, 0.005)
    level = _resolve(args, cfg, "level", str, "1+ab")
    prop2_raw = _resolve(args, cfg, "use_prop2", _as_bool, None)
    try:
        return GameSpec(
            variant=variant,
            m_theta=m_theta,
            m_phi=m_phi,
            xi=xi,
            level=level,
            use_prop2=prop2_raw,
        )
    except (AssertionError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _grid(args: argparse.Namespace, cfg: dict[str, str], start=0.0, stop=0.2, step=0.002) -> list[float]:
    raw_list = _resolve(args, cfg, "p_err_list", str, None)
    if raw_list:
        try:
            grid = sorted(float(tok) for tok in raw_list.replace(";", ",").split(",") if tok.strip())
        except ValueError as exc:
            raise ConfigError(f"p_err_list: {exc}") from exc
    else:
        start = _resolve(args, cfg, "p_err_start", float, start)
        stop = _resolve(args, cfg, "p_err_stop", float, stop)
        step = _resolve(args, cfg, "p_err_step", float, step)
        if step <= 0:
            raise ConfigError(f"p_err_step must be positive, got {step}")
        if stop < start:
            raise ConfigError(f"empty grid: start {start} > stop {stop}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        grid = [round(start + i * step, 12) for i in range(count)]
    if not grid:
        raise ConfigError("empty p_err grid")
    if grid[0] < 0.0 or grid[-1] > 1.0:
        raise ConfigError(f"p_err grid must stay within [0, 1], got [{grid[0]}, {grid[-1]}]")
    return grid


def _workers(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    env = os.environ.get("QPVBOUNDS_WORKERS")
    fallback = int(env) if env else 1
    workers = _resolve(args, cfg, "workers", int, fallback)
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    return workers


def _settings(args: argparse.Namespace, cfg: dict[str, str]) -> SolverSettings:
    tol = _resolve(args, cfg, "solver_tol", float, 1e-8)
    solver = _resolve(args, cfg, "solver", str, "auto")
    if solver not in ("auto", "clarabel", "scs"):
        raise ConfigError(f"solver must be auto, clarabel or scs, got {solver!r}")
    return SolverSettings(tol=tol, solver=solver)


def _out_stream(path: str | None):
    if path in (None, "-", ""):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


# --------------------------------------------------------------------------
# curve cache
# --------------------------------------------------------------------------


def _cache_key(spec: GameSpec, grid: list[float], settings: SolverSettings) -> str:
    blob = json.dumps(
        {
            "v": 2,
            "spec": asdict(spec),
            "grid": grid,
            "tol": settings.tol,
            "solver": settings.solver,
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cache_dir(args: argparse.Namespace, cfg: dict[str, str]) -> Path | None:
    if _resolve(args, cfg, "no_cache", _as_bool, False):
        return None
    raw = _resolve(args, cfg, "cache_dir", str, None)
    if raw:
        return Path(raw)
    output = getattr(args, "output", None) or cfg.get("output")
    if output and output != "-":
        return Path(output).resolve().parent
    return Path.cwd()


def _sweep_cached(
    spec: GameSpec,
    grid: list[float],
    settings: SolverSettings,
    workers: int,
    cache_dir: Path | None,
    echo=lambda msg: None,
) -> Curve:
    path = None
    if cache_dir is not None:
        path = cache_dir / f"curve-{_cache_key(spec, grid, settings)}.json"
        if path.exists():
            try:
                curve = Curve.from_json(path.read_text())
                if asdict(curve.spec) == asdict(spec):
                    echo(f"loaded cached curve {path}")
                    return curve
            except (ValueError, KeyError, TypeError):
                pass  # unreadable cache entry: recompute
    echo(f"solving {len(grid)} SDPs ({spec.variant}, m={spec.m}, level {spec.level})")
    curve = sweep_curve(spec, grid, settings, workers=workers)
    if path is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(curve.to_json())
        echo(f"cached curve at {path}")
    return curve


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    spec = _game_spec(args, cfg)
    grid = _grid(args, cfg)
    settings = _settings(args, cfg)
    workers = _workers(args, cfg)
    curve = _sweep_cached(spec, grid, settings, workers, _cache_dir(args, cfg), _echo(args))

    stream, close = _out_stream(_resolve(args, cfg, "output", str, None))
    try:
        writer = csv.writer(stream)
        writer.writerow(SWEEP_COLUMNS)
        for pt in curve.points:
            writer.writerow(
                [
                    _fmt(pt.p_err),
                    _fmt(pt.p_ans_upper),
                    spec.level,
                    spec.variant,
                    spec.m,
                    spec.m_theta,
                    spec.m_phi,
                    _fmt(spec.xi),
                    pt.status,
                ]
            )
    finally:
        if close:
            stream.close()

    failures = sum(1 for pt in curve.points if not math.isfinite(pt.p_ans_upper))
    if failures > FAIL_QUOTA * len(curve.points):
        print(f"error: {failures}/{len(curve.points)} grid points failed to solve", file=sys.stderr)
        return 2
    defect = curve.monotonicity_defect()
    if defect > MONO_TOL:
        print(f"error: curve decreases by {defect:.3g} (> {MONO_TOL:g})", file=sys.stderr)
        return 3
    return 0


def cmd_pwin(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    spec = _game_spec(args, cfg)
    settings = _settings(args, cfg)
    tol = _resolve(args, cfg, "tol", float, 2e-4)
    compiled = compile_game(spec)

    def vacuous(p_err: float) -> bool:
        report = solve(materialize(compiled, p_err), settings)
        if not report.ok:
            raise RuntimeError(f"solver failed at p_err={p_err:.6f}: {report.status}")
        return certified_upper(report) >= 1.0 - 1e-4

    try:
        lo, hi = 0.0, 0.5
        while not vacuous(hi):
            if hi >= 1.0:
                print(
                    f"error: bisection failed to bracket: p_ans < 1 even at p_err={hi}",
                    file=sys.stderr,
                )
                return 1
            lo, hi = hi, min(1.0, hi * 1.5)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if vacuous(mid):
                hi = mid
            else:
                lo = mid
    except RuntimeError as exc:
        print(f"error: {exc} (bracket [{lo:.6f}, {hi:.6f}])", file=sys.stderr)
        return 2

    p_star = hi
    p_win = 1.0 - p_star
    print(f"smallest p_err with p_ans >= 1 - 1e-4: {p_star:.6f}")
    print(f"winning probability upper bound:       {p_win:.6f}")
    if spec.variant != "qkd":
        # The overlap bound is valid independently of the relaxation, so the
        # reported bound is the better of the two.  For two-basis games the
        # SDP side is tight; for mutually unbiased m >= 3 the closed form
        # wins because both error-rate inequalities degenerate to the same
        # outcome-independent row (all cross overlaps equal).
        closed = tomamichel_bound(spec.measurement_family())
        verdict = "<=" if p_win <= closed + 1e-3 else "EXCEEDS"
        print(f"closed-form overlap bound:             {closed:.6f} (SDP {verdict} closed form)")
        best = min(p_win, closed)
        print(f"best p_win upper bound:                {best:.6f} "
              f"({'sdp' if p_win <= closed else 'closed form'})")
    return 0


def cmd_bounds(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    flavor = _resolve(args, cfg, "flavor", str, "bb84")
    if flavor not in ("bb84", "m_basis"):
        raise ConfigError(f"flavor must be bb84 or m_basis, got {flavor!r}")
    if flavor == "bb84":
        m_theta = _resolve(args, cfg, "m_theta", int, 2)
        m_phi = _resolve(args, cfg, "m_phi", int, 1)
        if (m_theta, m_phi) != (2, 1):
            raise ConfigError("flavor bb84 fixes (m_theta, m_phi) = (2, 1)")
        delta_default, level_default = 0.013, "2"
    else:
        m_theta = _resolve(args, cfg, "m_theta", int, 3)
        m_phi = _resolve(args, cfg, "m_phi", int, 2)
        delta_default = 0.009
        level_default = "2" if m_phi * (m_theta - 1) + 1 <= 3 else "1+ab"

    xi = _resolve(args, cfg, "xi", float, 0.005)
    level = _resolve(args, cfg, "level", str, level_default)
    eta = _resolve(args, cfg, "eta", float, None)
    if eta is None:
        raise ConfigError("bounds requires a response rate (--eta)")
    delta = _resolve(args, cfg, "delta", float, delta_default)
    n = _resolve(args, cfg, "n", int, 10)
    q = _resolve(args, cfg, "q", int, 0)
    beta = _resolve(args, cfg, "beta", float, None)
    strict_k = _resolve(args, cfg, "strict_k", _as_bool, False)

    try:
        spec = GameSpec(variant="qpv-relaxed", m_theta=m_theta, m_phi=m_phi, xi=xi, level=level)
    except (AssertionError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    grid = _grid(args, cfg, start=0.0, stop=0.024, step=0.002)
    settings = _settings(args, cfg)
    curve = _sweep_cached(
        spec, grid, settings, _workers(args, cfg), _cache_dir(args, cfg), _echo(args)
    )

    threshold = eta_threshold(curve, delta)
    print(f"loss threshold: response rates above eta_c = {threshold:.4f} admit bounds")
    if eta <= threshold:
        print(
            f"error: eta = {eta} is not above the threshold {threshold:.4f}; "
            "the relaxed bound is vacuous there",
            file=sys.stderr,
        )
        return 1

    wt = w_tilde(curve, eta)
    report = attacker_error_lower_bound(
        eta,
        delta,
        wt,
        flavor,
        n=n,
        q=q,
        m_config=(spec.m, m_theta, m_phi),
        beta=beta,
        xi=xi,
        strict_k=strict_k,
    )
    for key, value in report.as_record().items():
        print(f"{key} = {_fmt(value)}")
    if not report.qubits_allowed:
        print(f"note: q = {q} exceeds n/2 - 5 = {n / 2 - 5:g}; counting bound not applicable")
    output = _resolve(args, cfg, "output", str, None)
    if output:
        rec = report.as_record()
        stream, close = _out_stream(output)
        try:
            writer = csv.DictWriter(stream, fieldnames=list(rec))
            writer.writeheader()
            writer.writerow({k: _fmt(v) for k, v in rec.items()})
        finally:
            if close:
                stream.close()
    return 0


def cmd_strategies(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    spec = _game_spec(args, cfg)
    if spec.variant != "qpv":
        raise ConfigError("strategies compares against the strict game; use variant = qpv")
    fam = spec.measurement_family()
    p_step = _resolve(args, cfg, "p_step", float, 0.02)
    if not 0.0 < p_step <= 1.0:
        raise ConfigError(f"p_step must lie in (0, 1], got {p_step}")
    count = int(round(1.0 / p_step))
    p_grid = [min(1.0, i * p_step) for i in range(count + 1)]
    mixture = mixed_curve(fam, p_grid)

    with_sdp = _resolve(args, cfg, "with_sdp", _as_bool, True)
    curve = None
    if with_sdp:
        max_perr = max(pe for pe, _ in mixture)
        step = 0.002
        stop = min(1.0, math.ceil((max_perr + step) / step) * step)
        grid = [round(i * step, 12) for i in range(int(round(stop / step)) + 1)]
        curve = _sweep_cached(
            spec, grid, _settings(args, cfg), _workers(args, cfg), _cache_dir(args, cfg), _echo(args)
        )

    stream, close = _out_stream(_resolve(args, cfg, "output", str, None))
    gaps = []
    try:
        writer = csv.writer(stream)
        writer.writerow(["p", "p_err", "p_ans", "sdp_p_ans_upper", "gap"])
        for p, (pe, pa) in zip(p_grid, mixture):
            if curve is not None:
                upper = curve.value_at(pe)
                gap = upper - pa
                gaps.append(gap)
                writer.writerow([_fmt(p), _fmt(pe), _fmt(pa), _fmt(upper), _fmt(gap)])
            else:
                writer.writerow([_fmt(p), _fmt(pe), _fmt(pa), "", ""])
    finally:
        if close:
            stream.close()
    if gaps:
        print(f"max SDP-vs-mixture gap: {max(gaps):.6g}", file=sys.stderr)
    return 0


def cmd_export_sdpa(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    spec = _game_spec(args, cfg)
    p_err = _resolve(args, cfg, "p_err", float, 0.0)
    output = _resolve(args, cfg, "output", str, None)
    if not output:
        raise ConfigError("export-sdpa requires an output path")
    problem = materialize(compile_game(spec), p_err)
    comment = (
        f"variant={spec.variant} m={spec.m} (m_theta={spec.m_theta}, m_phi={spec.m_phi}) "
        f"level={spec.level} p_err={p_err:g} xi={spec.xi:g}"
    )
    write_sdpa(problem, Path(output), comment=comment)
    print(f"wrote {output}: {problem.nvars} variables, moment matrix dim {problem.dim}")
    return 0


def cmd_dump_bases(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    m_theta = _resolve(args, cfg, "m_theta", int, 2)
    m_phi = _resolve(args, cfg, "m_phi", int, 1)
    try:
        fam = family(m_theta, m_phi)
    except (AssertionError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    stream, close = _out_stream(_resolve(args, cfg, "output", str, None))
    try:
        writer = csv.writer(stream)
        header = ["x", "theta", "phi"]
        for a in (0, 1):
            for comp in (0, 1):
                header += [f"ket{a}_{comp}_re", f"ket{a}_{comp}_im"]
        writer.writerow(header)
        for x in range(fam.m):
            row = [x, _fmt(float(fam.theta[x])), _fmt(float(fam.phi[x]))]
            for a in (0, 1):
                ket = fam.ket(a, x)
                for comp in (0, 1):
                    row += [_fmt(float(ket[comp].real)), _fmt(float(ket[comp].imag))]
            writer.writerow(row)
    finally:
        if close:
            stream.close()
    return 0


def _echo(args: argparse.Namespace):
    if getattr(args, "quiet", False):
        return lambda msg: None
    return lambda msg: print(msg, file=sys.stderr)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit code 2; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_game_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--variant", choices=("qpv", "qpv-relaxed", "qkd"))
    sub.add_argument("--m-theta", dest="m_theta", type=int)
    sub.add_argument("--m-phi", dest="m_phi", type=int)
    sub.add_argument("--xi", type=float)
    sub.add_argument("--level", choices=LEVELS)
    sub.add_argument(
        "--use-prop2",
        dest="use_prop2",
        type=_as_bool,
        help="force the cross-term error inequality on or off (default: auto)",
    )


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat 'key = value' options file; flags win")
    sub.add_argument("--output", "-o", help="output path ('-' = stdout)")
    sub.add_argument("--workers", type=int, help="parallel SDP solves (env QPVBOUNDS_WORKERS)")
    sub.add_argument("--solver-tol", dest="solver_tol", type=float)
    sub.add_argument(
        "--solver",
        choices=("auto", "clarabel", "scs"),
        help="conic backend (auto: interior-point for small Gram blocks, splitting for large)",
    )
    sub.add_argument("--cache-dir", dest="cache_dir")
    sub.add_argument("--no-cache", dest="no_cache", action="store_const", const=True)
    sub.add_argument("--quiet", action="store_true", help="suppress progress messages")


def _add_grid_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--p-err-start", dest="p_err_start", type=float)
    sub.add_argument("--p-err-stop", dest="p_err_stop", type=float)
    sub.add_argument("--p-err-step", dest="p_err_step", type=float)
    sub.add_argument("--p-err-list", dest="p_err_list", help="comma-separated explicit grid")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="qpvbounds",
        description="Certified attacker bounds for lossy monogamy-of-entanglement games.",
    )
    subs = parser.add_subparsers(dest="command")

    sweep = subs.add_parser("sweep", help="solve a p_err grid and emit the curve as CSV")
    _add_game_flags(sweep)
    _add_grid_flags(sweep)
    _add_common_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    pwin = subs.add_parser("pwin", help="bisect for the winning-probability upper bound")
    _add_game_flags(pwin)
    _add_common_flags(pwin)
    pwin.add_argument("--tol", type=float, help="bisection tolerance on p_err (default 2e-4)")
    pwin.set_defaults(func=cmd_pwin)

    bounds = subs.add_parser("bounds", help="entanglement & error lower bounds from relaxed curves")
    bounds.add_argument("--flavor", choices=("bb84", "m_basis"))
    bounds.add_argument("--m-theta", dest="m_theta", type=int)
    bounds.add_argument("--m-phi", dest="m_phi", type=int)
    bounds.add_argument("--xi", type=float)
    bounds.add_argument("--level", choices=LEVELS)
    bounds.add_argument("--eta", type=float, help="response rate of the honest rounds")
    bounds.add_argument("--delta", type=float, help="error-margin parameter")
    bounds.add_argument("--n", type=int, help="challenge string length")
    bounds.add_argument("--q", type=int, help="attacker qubit budget")
    bounds.add_argument("--beta", type=float)
    bounds.add_argument("--strict-k", dest="strict_k", action="store_const", const=True)
    _add_grid_flags(bounds)
    _add_common_flags(bounds)
    bounds.set_defaults(func=cmd_bounds)

    strategies = subs.add_parser("strategies", help="mixture attack curve and its gap to the SDP")
    _add_game_flags(strategies)
    strategies.add_argument("--p-step", dest="p_step", type=float, help="mixture grid step")
    strategies.add_argument(
        "--no-sdp",
        dest="with_sdp",
        action="store_const",
        const=False,
        help="skip the SDP comparison column",
    )
    _add_common_flags(strategies)
    strategies.set_defaults(func=cmd_strategies)

    export = subs.add_parser("export-sdpa", help="write one game in sparse SDPA format")
    _add_game_flags(export)
    export.add_argument("--p-err", dest="p_err", type=float)
    _add_common_flags(export)
    export.set_defaults(func=cmd_export_sdpa)

    dump = subs.add_parser("dump-bases", help="print the discretized measurement bases")
    dump.add_argument("--m-theta", dest="m_theta", type=int)
    dump.add_argument("--m-phi", dest="m_phi", type=int)
    _add_common_flags(dump)
    dump.set_defaults(func=cmd_dump_bases)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        cfg = load_config(Path(args.config)) if getattr(args, "config", None) else {}
        return args.func(args, cfg)
    except (ConfigError, InfeasibleParameters) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
