"""``varietydist`` command line: sample, project, eval.

Exit codes: 0 success, 2 configuration or input error, 3 every chain failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import re
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .catalog import log_likelihood_multinomial, parse_system_ref
from .density import isotropic
from .endgame import TrackControls, project_batch, project_points
from .hmc import AllChainsFailed, HmcConfig, run_chains
from .polynomial import PolySystem, evaluate
from .rejection import RejectionConfig, sample_rejection
from .semialgebraic import lift_box, lift_with_slacks, marginalize
from .specfile import SpecError, SystemSpec, parse_box, parse_spec

log = logging.getLogger("varietydist")

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED = 0, 2, 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# systems


def load_system(ref: str):
    """A spec file path or a catalog reference.

    Returns (spec, label, catalog entry or None).
    """
    path = Path(ref)
    if path.is_file():
        return parse_spec(path.read_text(), source=str(path)), str(path), None
    try:
        entry = parse_system_ref(ref)
    except KeyError as exc:
        raise ConfigError(f"{ref!r} is neither a file nor a catalog system: {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return SystemSpec(entry.system, entry.sigma, None, None), entry.name, entry


def system_hash(system: PolySystem) -> str:
    return hashlib.sha256(str(system).encode()).hexdigest()


# ---------------------------------------------------------------------------
# tables


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_table(stream, header: list[str], columns: list, fmt_name: str = "csv", summary=None):
    nrows = len(columns[0]) if columns else 0
    if fmt_name == "csv":
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(header)
        for i in range(nrows):
            w.writerow([c[i] if isinstance(c[i], str) else fmt(c[i]) for c in columns])
    else:
        rows = [{h: _jsonable(c[i]) for h, c in zip(header, columns)} for i in range(nrows)]
        json.dump({"columns": header, "rows": rows, "summary": _jsonable(summary or {})}, stream, indent=1)
        stream.write("\n")


class Table(list):
    """CSV rows (lists of strings) with the file line each came from."""

    def __init__(self, rows=(), lines=()):
        super().__init__(rows)
        self.lines = list(lines)


def read_table(stream, source: str = "<input>") -> tuple[list[str], Table]:
    reader = csv.reader(stream)
    header = None
    rows = Table()
    for row in reader:
        if header is None:
            header = [h.strip() for h in row]
            continue
        if not row:
            continue
        if len(row) != len(header):
            raise ConfigError(f"{source}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}")
        rows.append(row)
        rows.lines.append(reader.line_num)
    return header or [], rows


def points_from_table(header, rows, names, source):
    missing = [nm for nm in names if nm not in header]
    if missing:
        raise ConfigError(f"{source}: missing column(s) {', '.join(missing)}")
    idx = [header.index(nm) for nm in names]
    X = np.empty((len(rows), len(names)))
    for r, row in enumerate(rows):
        for k, j in enumerate(idx):
            try:
                X[r, k] = float(row[j])
            except ValueError:
                line = rows.lines[r] if isinstance(rows, Table) else r + 2
                raise ConfigError(f"{source}: line {line}: {names[k]}={row[j]!r} is not a number") from None
    return X


@contextmanager
def _open_out(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as f:
            yield f


def _open_in(path):
    if path is None or path == "-":
        return io.StringIO(sys.stdin.read())
    try:
        return open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# commands


def _controls(args) -> TrackControls:
    return TrackControls(t_end=args.t_end, dt_min=args.dt_min, newton_max_iter=args.newton_max_iter)


def cmd_sample(args) -> int:
    spec, label, entry = load_system(args.system)
    system = spec.system
    n = system.n
    box = parse_box(args.box, n) if args.box else spec.box
    trunc = parse_box(args.truncate, n) if args.truncate else spec.truncate
    sigma = args.sigma if args.sigma is not None else spec.sigma
    if sigma is None or not sigma > 0:
        raise ConfigError("--sigma is required (positive) when the system does not set one")

    lift = lift_with_slacks(system) if system.inequalities else None
    target = lift.lifted if lift else system
    window = box if box is not None else trunc
    if lift and trunc is not None:
        trunc = lift_box(trunc, lift)

    model = isotropic(target, sigma, truncation=trunc, kind=args.kind)

    if args.sampler == "rejection":
        if window is None:
            raise ConfigError("rejection sampling needs --box (or a truncation)")
        pbox = lift_box(window, lift) if lift else window
        cfg = RejectionConfig(pbox, args.n, args.seed, args.mode, args.epsilon)
        batch = sample_rejection(model, cfg)
        config = {"sampler": "rejection", "box": pbox, "n_proposals": args.n, "mode": args.mode, "epsilon": args.epsilon}
    else:
        init = window
        if init is None:
            log.warning("no box or truncation: the density may not be normalizable")
            init = entry.box if entry is not None else ((-2.0, 2.0),) * n
        if lift:
            init = lift_box(init, lift)
        cfg = HmcConfig(
            n_chains=args.chains,
            n_warmup=args.warmup,
            n_samples=args.n,
            step_size=args.step_size,
            n_leapfrog=args.leapfrog,
            mass=args.mass,
            init_box=init,
            seed=args.seed,
            target_accept=args.target_accept,
            jitter=args.jitter,
        )
        try:
            batch = run_chains(model, cfg)
        except AllChainsFailed as exc:
            log.error("all chains failed: %s", exc)
            return EXIT_ALL_FAILED
        config = {
            "sampler": "hmc",
            "chains": args.chains,
            "warmup": args.warmup,
            "draws_per_chain": args.n,
            "step_size": args.step_size,
            "leapfrog": args.leapfrog,
            "mass": args.mass,
            "init_box": init,
            "target_accept": args.target_accept,
            "jitter": args.jitter,
        }

    if args.project:
        batch = project_batch(target, batch, _controls(args), seed=args.seed)
    if lift:
        batch = marginalize(batch, lift)

    header = list(batch.names)
    cols = [batch.points[:, j] for j in range(batch.dim)]
    extra = ["log_density", "residual_norm"]
    if args.sampler == "hmc":
        extra = ["chain_id"] + extra
    if args.project:
        extra += ["status", "residual"]
    header += extra
    cols += [batch.meta[k] for k in extra]

    summary = {
        "system": label,
        "system_hash": system_hash(system),
        "kind": model.kind.__class__.__name__,
        "sigma": sigma,
        "seed": args.seed,
        "config": config,
        **dict(batch.summary),
    }
    with _open_out(args.out) as f:
        write_table(f, header, cols, args.format, summary)
    _emit_summary(summary, args.summary)
    return EXIT_OK


def _emit_summary(summary, path):
    text = json.dumps(_jsonable(summary), indent=1, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stderr.write(text)


def cmd_project(args) -> int:
    spec, _, _ = load_system(args.system)
    system = spec.system
    with _open_in(args.inp) as f:
        header, rows = read_table(f, args.inp or "<stdin>")
    if not header:
        with _open_out(args.out):
            pass
        return EXIT_OK
    names = list(system.context.names)
    X = points_from_table(header, rows, names, args.inp or "<stdin>")

    lift = lift_with_slacks(system) if system.inequalities else None
    if lift:
        # start each slack at sqrt(max(h, 0)), the nearest point of its fibre
        H = np.column_stack([np.atleast_1d(evaluate(h, X)) for h in system.inequalities]) if len(X) else None
        S = np.sqrt(np.maximum(H, 0.0)) if H is not None else np.empty((0, len(system.inequalities)))
        X = np.hstack([X, S])
    target = lift.lifted if lift else system
    Xs, status, residual = project_points(target, X, seed=args.seed, controls=_controls(args))
    Xs = Xs[:, : system.n]

    keep = [j for j, h in enumerate(header) if h not in ("status", "residual")]
    out_header = [header[j] for j in keep] + ["status", "residual"]
    col_of = {nm: k for k, nm in enumerate(names)}
    cols = []
    for j in keep:
        h = header[j]
        if h in col_of:
            cols.append([fmt(v) for v in Xs[:, col_of[h]]])
        else:
            cols.append([row[j] for row in rows])
    cols += [list(status), [fmt(v) for v in residual]]
    with _open_out(args.out) as f:
        write_table(f, out_header, cols)
    counts = {s: int(np.sum(status == s)) for s in ("converged", "stalled")}
    log.info("projected %d rows: %s", len(rows), counts)
    return EXIT_OK


def _objective_loglik(params: str):
    key, eq, val = params.partition("=")
    if key.strip() != "counts" or not eq:
        raise ConfigError("loglik objective expects counts=a,b,...")
    try:
        counts = [float(c) for c in val.split(",")]
    except ValueError:
        raise ConfigError(f"bad counts {val!r}") from None
    return lambda x: log_likelihood_multinomial(x, counts)


OBJECTIVES = {"loglik": _objective_loglik}


def cmd_eval(args) -> int:
    spec, _, _ = load_system(args.system)
    name, _, params = args.objective.partition(":")
    if name not in OBJECTIVES:
        raise ConfigError(f"unknown objective {name!r}; known: {', '.join(sorted(OBJECTIVES))}")
    fn = OBJECTIVES[name](params)
    with _open_in(args.inp) as f:
        header, rows = read_table(f, args.inp or "<stdin>")
    names = list(spec.system.context.names)
    if not header:
        header = names
    X = points_from_table(header, rows, names, args.inp or "<stdin>")
    try:
        vals = [fn(x) for x in X]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cols = [[row[j] for row in rows] for j in range(len(header))] + [[fmt(v) for v in vals]]
    with _open_out(args.out) as f:
        write_table(f, header + [name], cols)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_track_flags(p):
    g = p.add_argument_group("projection")
    g.add_argument("--t-end", type=float, default=TrackControls.t_end)
    g.add_argument("--dt-min", type=float, default=TrackControls.dt_min)
    g.add_argument("--newton-max-iter", type=int, default=TrackControls.newton_max_iter)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="varietydist", description="Sample distributions concentrated near real varieties.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", help="draw points near a variety")
    s.add_argument("--system", required=True, help="spec file or catalog name[:key=value,...]")
    s.add_argument("--sampler", choices=("rejection", "hmc"), default="hmc")
    s.add_argument("--n", type=_positive_int, default=1000, help="proposals (rejection) or draws per chain (hmc)")
    s.add_argument("--chains", type=_positive_int, default=4)
    s.add_argument("--sigma", type=float)
    s.add_argument("--kind", choices=("hvn", "vn", "mvn"), help="default: vn for one equation, mvn otherwise")
    s.add_argument("--box", help="lo,hi for every coordinate, or lo,hi per coordinate")
    s.add_argument("--truncate", help="truncation box, same syntax as --box")
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--project", action="store_true", help="move draws onto the variety")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--out")
    s.add_argument("--summary", help="write the run summary here instead of stderr")
    r = s.add_argument_group("rejection")
    r.add_argument("--mode", choices=("density", "band"), default="density")
    r.add_argument("--epsilon", type=float)
    h = s.add_argument_group("hmc")
    h.add_argument("--warmup", type=int, default=1000)
    h.add_argument("--step-size", type=float, default=0.1)
    h.add_argument("--leapfrog", type=_positive_int, default=32)
    h.add_argument("--mass", type=float, default=1.0)
    h.add_argument("--target-accept", type=float, default=0.8)
    h.add_argument("--jitter", type=float, default=0.2)
    _add_track_flags(s)
    s.set_defaults(func=cmd_sample)

    pr = sub.add_parser("project", help="project CSV points onto the variety")
    pr.add_argument("--system", required=True)
    pr.add_argument("--in", dest="inp", required=True)
    pr.add_argument("--out")
    pr.add_argument("--seed", type=_u64, default=0)
    _add_track_flags(pr)
    pr.set_defaults(func=cmd_project)

    ev = sub.add_parser("eval", help="append an objective column to CSV points")
    ev.add_argument("--system", required=True)
    ev.add_argument("--in", dest="inp", required=True)
    ev.add_argument("--objective", required=True, help="e.g. loglik:counts=8,8,1,3")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)
    return p


def _glue_negative_values(argv):
    """``--box -1.5,1.5`` -> ``--box=-1.5,1.5`` so argparse does not see a flag."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--box", "--truncate", "--sigma"):
            nxt = next(it, None)
            if nxt is not None and re.match(r"-\.?\d", nxt):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _glue_negative_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        sys.stderr.write(f"varietydist: error: {exc}\n")
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SpecError, ValueError) as exc:
        sys.stderr.write(f"varietydist: error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
