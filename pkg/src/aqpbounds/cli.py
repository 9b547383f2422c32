"""Command-line front end: ``build``, ``query``, ``gen`` and ``verify``.

Results go to standard output as JSON lines; diagnostics go to standard error.
Exit status is 0 on success, 1 when a verification verdict fails and 2 for
usage, parse or planning errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import datagen, scramble, verify
from .bounders import BounderError
from .expr import ExprError
from .query import PlanError, QuerySyntaxError, execute, parse, plan
from .rangetrim import BOUNDER_NAMES
from .query.plan import STRATEGIES


def _emit(obj, out) -> None:
    out.write(json.dumps(obj, sort_keys=False) + "\n")


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def cmd_build(args, out) -> int:
    schema = scramble.load_schema(args.schema)
    columns, dropped = scramble.ingest_csv(args.input, schema)
    s = scramble.build_scramble(columns, schema, args.seed, args.block_size, args.widen_factor)
    scramble.save(s, args.out)
    if dropped:
        print(f"dropped {dropped} rows with unparseable values", file=sys.stderr)
    _emit({"out": args.out, "rows": s.n_rows, "blocks": s.n_blocks, "dropped": dropped, "seed": s.seed}, out)
    return 0


def cmd_query(args, out) -> int:
    s = scramble.load(args.db)
    q = parse(args.sql, columns=list(s.schema))
    p = plan(
        q,
        s.catalog,
        s.dictionaries,
        delta=args.delta,
        bounder=args.bounder,
        strategy=args.strategy,
        stop=args.stop,
    )
    result = execute(p, s, args.seed)
    for rec in result.records():
        _emit(rec, out)
    return 0


def cmd_gen(args, out) -> int:
    if args.preset == "flights":
        cols = datagen.flights_table(args.rows or 1_000_000, args.seed or 0)
        schema = datagen.FLIGHTS_SCHEMA
    elif args.preset == "sparse":
        cols = verify.sparse_groups_table(args.rows or 1_000_000, seed=args.seed or 0)
        schema = {"g": "categorical", "x": "numeric"}
    else:
        if not args.spec:
            return _fail("gen needs --spec or --preset")
        with open(args.spec) as fh:
            spec = json.load(fh)
        if args.rows is not None:
            spec["rows"] = args.rows
        if args.seed is not None:
            spec["seed"] = args.seed
        cols = datagen.generate(spec)
        schema = datagen.schema_of(spec)
    datagen.write_csv(cols, args.out)
    if args.schema_out:
        with open(args.schema_out, "w") as fh:
            json.dump({"columns": [{"name": k, "type": v} for k, v in schema.items()]}, fh, indent=2)
    n = len(next(iter(cols.values()))) if cols else 0
    _emit({"out": args.out, "rows": n, "columns": list(cols)}, out)
    return 0


def cmd_verify(args, out) -> int:
    reports = verify.run_mode(
        args.mode,
        seed=args.seed or 0,
        trials=args.trials,
        delta=args.delta,
        n=args.n,
        m=args.m,
        bounders=args.bounder,
    )
    for r in reports:
        _emit(r.record(), out)
    return 0 if all(r.passed for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aqpbounds", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a scramble file from a CSV")
    b.add_argument("--input", required=True, help="CSV file with a header row")
    b.add_argument("--schema", required=True, help="JSON schema: {name: numeric|categorical}")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--block-size", type=int, default=scramble.DEFAULT_BLOCK_SIZE)
    b.add_argument("--widen-factor", type=float, default=0.0, help="pad numeric ranges by this fraction of their width")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="run an approximate query")
    q.add_argument("sql")
    q.add_argument("--db", required=True)
    q.add_argument("--delta", type=float, default=1e-15)
    q.add_argument("--bounder", default="bernstein+rt", choices=BOUNDER_NAMES)
    q.add_argument("--strategy", default="activesync", choices=STRATEGIES)
    q.add_argument("--stop", default=None, help="taken:M, abs:E, rel:E, thresh:V, topk:K:min|max or ordered")
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_query)

    g = sub.add_parser("gen", help="generate a synthetic CSV")
    g.add_argument("--spec", help="generator spec (JSON)")
    g.add_argument("--preset", choices=("flights", "sparse"))
    g.add_argument("--rows", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--schema-out", help="also write the matching schema JSON here")
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("mode", choices=verify.MODES)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int)
    v.add_argument("--delta", type=float)
    v.add_argument("--n", type=int, help="exhaustive: enumerate the table 0..N-1")
    v.add_argument("--m", type=int, help="exhaustive: only this sample size")
    v.add_argument("--bounder", action="append", choices=BOUNDER_NAMES)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    if getattr(args, "delta", None) is not None and not (0.0 < args.delta < 1.0):
        return _fail("--delta must lie in (0, 1)")
    try:
        return args.func(args, out)
    except QuerySyntaxError as exc:
        return _fail(str(exc))
    except (PlanError, ExprError, BounderError, scramble.IngestionError, scramble.ScrambleFormatError,
            datagen.GenSpecError, ValueError) as exc:
        return _fail(str(exc))
    except OSError as exc:
        return _fail(f"{exc.strerror}: {exc.filename}")


if __name__ == "__main__":
    sys.exit(main())
