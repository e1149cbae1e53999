"""Command-line entry point: ``trimix <command> [flags]``.

Every command writes its outputs into ``--out DIR`` together with a
``manifest.json`` (or prints the main output when ``--out`` is omitted).
``trimix replay --manifest DIR/manifest.json`` re-runs a recorded command and
checks the outputs are byte-identical.

Exit codes: 0 success, 1 a checked inequality or identity failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .chain import CONTINUOUS, DISCRETE, ChainConfig, EventLog, Trajectory, decompose_first_row, generate_log, replay, simulate
from .exact import SizeCapError, continuous_tv, t_mix_exact, tv_series
from .modular import ResidueVector
from .schedule import GENERAL, PRIME, Constants, schedule_eval

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def to_json(obj) -> str:
    def default(o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o).__name__)

    return json.dumps({"schema_version": SCHEMA_VERSION, **obj}, sort_keys=True, default=default, indent=1) + "\n"


def _int_list(s: str) -> list[int]:
    return [int(v) for v in str(s).replace(";", ",").split(",") if v.strip()]


def _float_list(s: str) -> list[float]:
    return [float(v) for v in str(s).split(",") if v.strip()]


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _vec(s, n: int, m: int) -> ResidueVector:
    v = _int_list(s)
    if len(v) == n - 1:
        v = [0, *v]
    if len(v) != n:
        raise UsageError(f"vector {s!r} needs {n - 1} or {n} entries")
    try:
        return ResidueVector.frequency(v, m)
    except ValueError as e:
        raise UsageError(str(e)) from e


# ------------------------------------------------------------------ commands
# each returns (files: dict name -> text, ok: bool)


def cmd_simulate(a):
    _need(a, "n", "m", "horizon")
    files = {}
    for r in range(a.replicas):
        cfg = ChainConfig(a.n, a.m, a.horizon, seed=a.seed, variant=a.variant, replica=r)
        files[f"log_{r:04d}.jsonl"] = generate_log(cfg).to_jsonl()
    return files, True


def cmd_exact_tv(a):
    _need(a, "n", "m", "t_max")
    if a.variant == DISCRETE:
        tv = tv_series(a.n, a.m, int(a.t_max))
        rows = [(t, float(v)) for t, v in enumerate(tv)]
        header = ["t", "tv"]
    else:
        ts = np.arange(0.0, a.t_max + 1e-12, a.dt)
        rows = [(float(t), *continuous_tv(a.n, a.m, float(t))) for t in ts]
        header = ["t", "tv", "truncation"]
    ok = all(rows[i + 1][1] <= rows[i][1] + 1e-12 for i in range(len(rows) - 1))
    return {"tv.csv": to_csv(header, rows)}, ok


def cmd_tmix(a):
    _need(a, "n", "m")
    ms = _int_list(a.m)
    rows = [(a.n, m, a.eps, t_mix_exact(a.n, m, a.eps)) for m in ms]
    return {"tmix.csv": to_csv(["n", "m", "eps", "t_mix"], rows)}, True


def cmd_spectral(a):
    from .spectral import ConditionalSpectrum, conditional_exact_tv, l2_bound, l2_exact

    _need(a, "n", "m")
    if a.log:
        log = EventLog.from_jsonl(Path(a.log).read_text())
        if (log.config.n, log.config.m) != (a.n, a.m):
            raise UsageError("--n/--m do not match the log header")
        t = log.config.horizon if a.t is None else a.t
        ws, X = [], log.config.start_state().entries.copy()
        for s, r, g in zip(log.times.tolist(), log.rows.tolist(), log.signs.tolist()):
            if s > t:
                break
            if g == 0:
                continue
            if r == 2:
                ws.append(X[1].tolist())
            X[r - 2] = (X[r - 2] + g * X[r - 1]) % a.m
    elif a.ws is not None:
        ws = [_vec(w, a.n, a.m).coords.tolist() for w in a.ws.split(";") if w.strip()]
    else:
        raise UsageError("give --ws or --log")
    spec = ConditionalSpectrum(np.array(ws, dtype=np.int64).reshape(-1, a.n), a.n, a.m)
    tv = conditional_exact_tv(spec)
    out = {"n": a.n, "m": a.m, "k": spec.k, "ws": spec.ws, "tv": tv, "l2_bound": l2_bound(spec),
           "l2_exact": l2_exact(spec), "four_tv_sq": 4 * tv * tv}
    out["dominated"] = out["four_tv_sq"] <= out["l2_bound"] + 1e-9
    return {"spectral.json": to_json(out)}, True


def cmd_observe(a):
    from . import observables as ob

    if a.check:
        _need(a, "n", "m")
        ok_all, rows = True, []
        y_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([a.seed, 7])))
        for r in range(a.replicas):
            cfg = ChainConfig(a.n, a.m, a.horizon, seed=a.seed, replica=r)
            traj = simulate(cfg, np.linspace(0.0, a.horizon, 9))
            if a.check == "separating":
                reps = [decompose_first_row(traj)]
            else:
                y = ResidueVector.frequency([0, *y_rng.integers(0, a.m, a.n - 1)], a.m)
                reps = [ob.backwards_identity_check(traj, y, I) for I in range(2, a.n + 1)]
            for rep in reps:
                ok_all &= rep.ok
                rows.append((r, rep.name, rep.checks, int(rep.ok)))
        return {"checks.csv": to_csv(["replica", "check", "count", "ok"], rows)}, ok_all
    _need(a, "log", "observable")
    log = EventLog.from_jsonl(Path(a.log).read_text())
    cfg = log.config
    start = cfg.start_state()
    traj = Trajectory(np.array([0.0, cfg.horizon]), replay(log, [0.0, cfg.horizon], start), log, start)
    n, m = cfg.n, cfg.m
    if a.observable == "corner":
        tr = ob.corner_process(traj)
        return {"corner.csv": to_csv(["t", "value"], zip(tr.times.tolist(), tr.values.tolist()))}, True
    if a.observable == "east":
        ct = ob.east_column(traj)
        return {"east.csv": to_csv(["t", *[f"z{i}" for i in range(1, n + 1)]],
                                   ([t, *v] for t, v in zip(ct.times.tolist(), ct.values.tolist())))}, True
    _need(a, "y")
    y = _vec(a.y, n, m)
    if a.observable == "z":
        tr = ob.track_Z(traj, y, a.i)
        return {"z.csv": to_csv(["t", "value"], zip(tr.times.tolist(), tr.values.tolist()))}, True
    if a.observable == "hitting":
        T = ob.hitting_time(traj, y, a.i)
        # never hit within the log: null rather than the non-standard Infinity token
        return {"hitting.json": to_json({"i": a.i, "T": T if math.isfinite(T) else None})}, True
    if a.observable == "intervals":
        recs = ob.detect_intervals(ob.track_Z(traj, y, 2))
        return {"intervals.csv": to_csv(["kind", "start", "end", "censored"],
                                        ((r.kind, r.start, r.end, int(r.censored)) for r in recs))}, True
    if a.observable == "ring-count":
        x = 0 if a.x is None else a.x
        cnt = ob.ring_counter_A(traj, y, x, cfg.horizon, a.when)
        return {"ring_count.json": to_json({"x": x, "t": cfg.horizon, "when": a.when, "count": cnt})}, True
    raise UsageError(f"unknown observable {a.observable!r}")


def cmd_scaling(a):
    from .estimators import scaling_study

    if a.grid:
        grid = [tuple(int(v) for v in p.split(":")) for p in a.grid.split(",") if p.strip()]
    else:
        _need(a, "n", "m")
        grid = [(n, m) for n in _int_list(a.n) for m in _int_list(a.m)]
    res = scaling_study(grid, a.eps, a.budget, a.replicas, a.projection, a.seed, a.threads)
    rows = [(r.n, r.m, r.t_mix, r.se, r.replicas, r.seed, r.method,
             "" if r.bracket is None else f"{r.bracket[0]}:{r.bracket[1]}", int(r.partial)) for r in res.rows]
    fits = {"partial": res.partial, "se_method": res.se_method,
            "fits": [{"axis": f.axis, "fixed": f.fixed, "exponent": f.exponent, "stderr": f.stderr,
                      "ci95": list(f.ci95), "points": f.points} for f in res.fits]}
    return {"scaling.csv": to_csv(["n", "m", "t_mix", "se", "replicas", "seed", "method", "bracket", "partial"], rows),
            "fits.json": to_json(fits)}, True


def cmd_bounds(a):
    from .spectral import CSV_HEADER, lemma_q_bound_terms, spectral_sum_bound

    if a.lemma == "integral":
        xs = _float_list(a.x_grid)
        rows, ok = [], True
        for m in range(2, a.m_max + 1):
            for x in xs:
                lhs, rhs = spectral_sum_bound(x, m)
                good = lhs <= rhs + 1e-9
                ok &= good
                rows.append((m, x, lhs, rhs, int(good)))
        return {"integral.csv": to_csv(["m", "x", "lhs", "rhs", "ok"], rows)}, ok
    if a.lemma == "expon":
        from .estimators import expon_tail_check

        res = expon_tail_check(range(1, a.k_max + 1), a.trials, a.seed)
        rows = [(r.k, r.upper_exact, r.upper_bound, r.upper_mc, r.lower_exact, r.lower_bound, r.lower_mc, int(r.ok))
                for r in res]
        head = ["k", "upper_exact", "upper_bound", "upper_mc", "lower_exact", "lower_bound", "lower_mc", "ok"]
        return {"expon.csv": to_csv(head, rows)}, all(r.ok for r in res)
    if a.lemma == "q":
        _need(a, "n", "m")
        sch = schedule_eval(a.n, a.m, Constants(K_tilde=a.k_tilde), a.variant)
        rows = [lemma_q_bound_terms(a.n, a.m, k, sch, a.exact_counts).csv_row() for k in _float_list(a.k_grid)]
        return {"q_terms.csv": to_csv(CSV_HEADER, rows), "schedule.json": to_json({"schedule": sch.to_dict()})}, True
    if a.lemma == "first":
        from .estimators import induction_probe

        _need(a, "n", "m")
        reps = [induction_probe(a.n, a.m, t, a.replicas, a.seed) for t in _float_list(a.t_grid)]
        return {"induction.json": to_json({"rows": [r.to_dict() for r in reps]})}, all(r.ok for r in reps)
    raise UsageError(f"unknown lemma {a.lemma!r}")


def cmd_replay(a):
    _need(a, "manifest")
    man = json.loads(Path(a.manifest).read_text())
    with tempfile.TemporaryDirectory() as tmp:
        argv = list(man["argv"]) + ["--out", tmp]
        code = main(argv, _write_manifest=False)
        rows, ok = [], code != EXIT_USAGE
        for name, digest in sorted(man["outputs"].items()):
            p = Path(tmp) / name
            got = _sha256(p.read_bytes()) if p.exists() else ""
            ok &= got == digest
            rows.append((name, digest, got, int(got == digest)))
    return {"replay.csv": to_csv(["file", "recorded", "reproduced", "match"], rows)}, ok


COMMANDS = {
    "simulate": cmd_simulate,
    "exact-tv": cmd_exact_tv,
    "tmix": cmd_tmix,
    "spectral": cmd_spectral,
    "observe": cmd_observe,
    "scaling": cmd_scaling,
    "bounds": cmd_bounds,
    "replay": cmd_replay,
}


# ------------------------------------------------------------------ parser


def _env_seed() -> int:
    v = os.environ.get("TRIMIX_SEED")
    return int(v) if v not in (None, "") else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (files plus manifest.json); stdout if omitted")
    common.add_argument("--config", help="JSON file of option defaults, keyed by option name")
    common.add_argument("--seed", type=int, default=None, help="master seed (default: $TRIMIX_SEED or 0)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")

    p = argparse.ArgumentParser(prog="trimix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"trimix {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate replicas and store event logs")
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--variant", choices=[DISCRETE, CONTINUOUS], default=CONTINUOUS)
    s.add_argument("--horizon", type=float)
    s.add_argument("--replicas", type=int, default=1)

    s = sub.add_parser("exact-tv", parents=[common], help="exact d_n(t) series by enumeration")
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--t-max", type=float)
    s.add_argument("--variant", choices=[DISCRETE, CONTINUOUS], default=DISCRETE)
    s.add_argument("--dt", type=float, default=1.0, help="time step for the continuous series")

    s = sub.add_parser("tmix", parents=[common], help="exact discrete mixing time")
    s.add_argument("--n", type=int)
    s.add_argument("--m", help="modulus or comma-separated list")
    s.add_argument("--eps", type=float, default=0.25)

    s = sub.add_parser("spectral", parents=[common], help="conditional first-row law and its l2 bounds")
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--ws", help="row-2 vectors 'a,b,..;c,d,..' (n-1 or n entries each)")
    s.add_argument("--log", help="read the row-2 values from a stored event log")
    s.add_argument("--t", type=float, help="cut-off time when reading --log")

    s = sub.add_parser("observe", parents=[common], help="identity checks or observables over a stored log")
    s.add_argument("--check", choices=["backwards-identity", "separating"])
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--horizon", type=float, default=10.0)
    s.add_argument("--replicas", type=int, default=200)
    s.add_argument("--log")
    s.add_argument("--observable", choices=["z", "hitting", "intervals", "ring-count", "corner", "east"])
    s.add_argument("--y", help="observable vector (n-1 or n entries)")
    s.add_argument("--i", type=int, default=2)
    s.add_argument("--x", type=int)
    s.add_argument("--when", choices=["pre", "post"], default="pre")

    s = sub.add_parser("scaling", parents=[common], help="t_mix over a grid plus log-log fits")
    s.add_argument("--grid", help="'n:m,n:m,...'")
    s.add_argument("--n", help="comma-separated n values (with --m)")
    s.add_argument("--m", help="comma-separated m values (with --n)")
    s.add_argument("--eps", type=float, default=0.25)
    s.add_argument("--budget", type=int, default=200, help="max Monte Carlo probes")
    s.add_argument("--replicas", type=int, default=20000)
    s.add_argument("--projection", default="first_row", choices=["corner", "first_row", "last_column", "full"])

    s = sub.add_parser("bounds", parents=[common], help="evaluate bound inequalities")
    s.add_argument("--lemma", choices=["integral", "expon", "q", "first"], required=False)
    s.add_argument("--m-max", type=int, default=200)
    s.add_argument("--x-grid", default="0.1,0.5,1,5,20")
    s.add_argument("--k-max", type=int, default=50)
    s.add_argument("--trials", type=int, default=0)
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--k-grid", default="0,1,2,5,10,20,50,100")
    s.add_argument("--variant", choices=[GENERAL, PRIME], default=GENERAL)
    s.add_argument("--k-tilde", type=float, default=Constants().K_tilde)
    s.add_argument("--exact-counts", action="store_true")
    s.add_argument("--t-grid", default="1,5,20")
    s.add_argument("--replicas", type=int, default=2000)

    s = sub.add_parser("replay", parents=[common], help="re-run a manifest and compare output digests")
    s.add_argument("--manifest")
    return p


def _sha256(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def _code_version() -> str:
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                              cwd=Path(__file__).parent, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _canonical_argv(a, sub: argparse.ArgumentParser) -> list[str]:
    """Flags that reproduce the resolved options (config and env folded in)."""
    argv = [a.command]
    for act in sub._actions:
        if not act.option_strings or act.dest in ("help", "out", "config"):
            continue
        v = getattr(a, act.dest, None)
        if v is None or v is False:
            continue
        flag = act.option_strings[0]
        argv += [flag] if v is True else [flag, str(v)]
    return argv


def _parse(argv, parser):
    a = parser.parse_args(argv)
    if a.config:
        try:
            conf = json.loads(Path(a.config).read_text())
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot read --config: {e}") from e
        sub = parser._subparsers._group_actions[0].choices[a.command]
        known = {act.dest for act in sub._actions}
        unknown = set(conf) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**conf)
        a = parser.parse_args(argv)
    if a.seed is None:
        a.seed = _env_seed()
    if a.threads is None:
        a.threads = os.cpu_count() or 1
    return a


def main(argv=None, _write_manifest: bool = True) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        a = _parse(argv, parser)
    except SystemExit as e:  # argparse usage errors
        return EXIT_USAGE if e.code else EXIT_OK
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"trimix: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        files, ok = COMMANDS[a.command](a)
    except (UsageError, SizeCapError, ValueError) as e:
        parser._subparsers._group_actions[0].choices[a.command].print_usage(sys.stderr)
        print(f"trimix {a.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        digests = {}
        for name, text in files.items():
            data = text.encode()
            (out / name).write_bytes(data)
            digests[name] = _sha256(data)
        if _write_manifest:
            sub = parser._subparsers._group_actions[0].choices[a.command]
            man = {
                "command": a.command,
                "argv": _canonical_argv(a, sub),
                "config": {k: v for k, v in vars(a).items() if k not in ("out", "config")},
                "seeds": {"seed": a.seed},
                "code_version": _code_version(),
                "started": started,
                "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "outputs": digests,
                "ok": ok,
            }
            (out / "manifest.json").write_text(to_json(man))
    else:
        for text in files.values():
            sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
