"""Command-line entry point.

Exit codes: 0 when every checked claim holds, 2 when one fails (a
falsification report is printed), 1 for usage and input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

from . import bidding, exante, generators, ladder, model, shares, xosalloc
from .errors import BoundViolated, FairshareError, Falsification, LemmaViolated
from .numerics import format_rat, rat


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    raw = os.environ.get("FAIRSHARE_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"FAIRSHARE_SEED must be an integer, got {raw!r}") from None


def _json_default(obj):
    if isinstance(obj, Fraction):
        return format_rat(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(obj, out) -> None:
    out.write(json.dumps(obj, sort_keys=True, indent=2, default=_json_default))
    out.write("\n")


def _read_instance(path: str | None, stdin) -> model.Instance:
    if path in (None, "-"):
        text = stdin.read()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return model.loads_instance(text)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_shares(args, inst, out):
    agents = range(inst.n) if args.agent is None else [args.agent]
    reports = []
    for i in agents:
        if not 0 <= i < inst.n:
            raise UsageError(f"agent {i} out of range")
        a = inst.agents[i]
        rep = shares.share_report(a.valuation, a.entitlement).to_json()
        rep["agent"] = i
        reports.append(rep)
    _emit(reports[0] if args.agent is not None else reports, out)


def cmd_allocate(args, inst, out):
    if args.algo == "welfare-max":
        bundles, total = xosalloc.welfare_max(inst.valuations)
        _emit(
            {
                "welfare": total,
                "agents": [
                    {"bundle": list(model.items_of(b)), "value": v.value(b)}
                    for b, v in zip(bundles, inst.valuations)
                ],
            },
            out,
        )
        return
    if args.algo == "apsxos":
        res = xosalloc.apsxos_allocate(inst)
    elif args.algo == "one-sixth":
        res = xosalloc.allocate_one_sixth(inst)
    else:
        res = xosalloc.allocate_equal_417(inst)
        xosalloc.lemma817_check(inst, res.trace)
    report = res.to_json()
    report["algo"] = args.algo
    if res.trace is not None:
        report["step1"] = res.trace.to_json()
    _emit(report, out)


def cmd_bid(args, inst, out):
    strategies = bidding.parse_strategies(args.strategies, inst.n)
    tie = bidding.lowest_index if args.tiebreak == "index" else bidding.seeded_tiebreak(args.seed)
    transcript = bidding.run_game(inst, strategies, args.mode, tie, args.seed)
    out.write(transcript.to_jsonl())
    if not transcript.to_jsonl().endswith("\n"):
        out.write("\n")


def _appendix_batch(task):
    k, seed, start, count = task
    import random

    for s in range(start, start + count):
        ladder.verify_appendix(ladder.random_y(k, random.Random(f"{seed}:{k}:{s}")))
    return count


def cmd_verify_appendix(args, out):
    ks = [args.k] if args.k is not None else list(range(2, 11))
    tasks = []
    chunk = max(1, args.samples // max(1, args.jobs))
    for k in ks:
        for start in range(0, args.samples, chunk):
            tasks.append((k, args.seed, start, min(chunk, args.samples - start)))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            done = sum(pool.map(_appendix_batch, tasks))
    else:
        done = sum(map(_appendix_batch, tasks))
    _emit({"k": ks, "samples": args.samples, "seed": args.seed, "checked": done, "violations": 0}, out)


def cmd_verify_ladder(args, inst, out):
    reports = []
    for i, v in enumerate(inst.valuations):
        B = model.full(inst.m)
        k = args.k if args.k is not None else ladder.choose_k(inst.m)
        lad = ladder.compute_ladder(v, B, k)
        entry = {"agent": i, "k": k, "ladder": list(lad.entries)}
        if model.class_check(v, "subadditive"):
            ladder.check_ladder_lemmas(v, B, k, strict=True)
            bound = ladder.payment_bound(lad)
            entry["payment_bound"] = bound
            if inst.m <= (k - 1) ** (k - 1) and bound < 1:
                raise LemmaViolated(f"agent {i}: payment bound {format_rat(bound)} < 1")
        else:
            entry["payment_bound"] = None
        reports.append(entry)
    _emit(reports, out)


def cmd_verify_relations(args, inst, out):
    if not inst.equal_entitlements:
        raise UsageError("share relations need equal entitlements")
    _emit([shares.share_relations(v, inst.n) for v in inst.valuations], out)


def cmd_verify_negative(args, out):
    con = bidding.gen_negative_instance(args.k, args.q, args.eps)
    battery = [("one-shot", con.one_shot()), ("greedy", bidding.Greedy())]
    battery += [(f"random:{s}", bidding.RandomStrategy(args.seed + s)) for s in range(args.random)]
    results = []
    for name, strat in battery:
        t = bidding.run_negative(con, strat, args.seed)
        val = t.values[0]
        results.append({"strategy": name, "value": val})
        if val > con.bound:
            raise BoundViolated(
                f"protagonist strategy {name} reached {format_rat(val)} > {format_rat(con.bound)}"
            )
    _emit(
        {"k": con.k, "q": con.q, "eps": con.eps, "n": con.n_nominal, "m": con.instance.m,
         "aps": con.aps, "bound": con.bound, "results": results},
        out,
    )


def cmd_generate(args, out):
    if args.kind == "vector":
        inst = exante.gen_vector_instance(args.n, args.cls)
    elif args.kind == "triangles":
        inst = generators.two_triangle_instance(args.n)
    elif args.kind == "random":
        import random

        rng = random.Random(args.seed)
        inst = generators.random_instance(args.cls, args.m, args.n, rng, equal=not args.unequal)
    else:
        con = bidding.gen_negative_instance(args.k, args.q, args.eps)
        _emit(
            {"k": con.k, "q": con.q, "eps": con.eps, "n": con.n_nominal, "m": con.instance.m,
             "aps": con.aps, "bound": con.bound, "p1": list(con.p1), "p2": list(con.p2),
             "entitlements": list(con.instance.entitlements)},
            out,
        )
        return
    out.write(model.dumps_instance(inst))
    out.write("\n")


def cmd_exante(args, inst, out):
    lottery, ratio = exante.exante_opt(inst, args.share)
    _emit(
        {
            "share": args.share,
            "ratio": ratio,
            "expected_values": lottery.expected_values(inst),
            "support": [
                {"bundles": [list(model.items_of(b)) for b in alloc.bundles], "probability": p}
                for alloc, p in lottery.support
            ],
        },
        out,
    )


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    p = _Parser(prog="fairshare", description="Exact share computations and allocation checks.")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for batch runs")
    # --jobs is also accepted after the subcommand.
    common = _Parser(add_help=False)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS)

    def parser_class(**kw):
        return _Parser(parents=[common], **kw)

    sub = p.add_subparsers(dest="command", required=True, parser_class=parser_class)

    s = sub.add_parser("shares", help="MMS, APS and MES of one agent")
    s.add_argument("file", nargs="?")
    s.add_argument("--agent", type=int)

    s = sub.add_parser("allocate", help="run an allocation algorithm")
    s.add_argument("file", nargs="?")
    s.add_argument("--algo", required=True,
                   choices=["apsxos", "one-sixth", "four-seventeenths", "welfare-max"])

    s = sub.add_parser("bid", help="play the bidding game")
    s.add_argument("file", nargs="?")
    s.add_argument("--strategies", default="one-shot")
    s.add_argument("--mode", choices=["plain", "extended"], default="extended")
    s.add_argument("--tiebreak", choices=["index", "seeded"], default="index")
    s.add_argument("--seed", type=int, default=seed)

    s = sub.add_parser("verify", help="check a claim")
    vsub = s.add_subparsers(dest="what", required=True, parser_class=parser_class)
    a = vsub.add_parser("appendix")
    a.add_argument("--k", type=int)
    a.add_argument("--samples", type=int, default=1000)
    a.add_argument("--seed", type=int, default=seed)
    a = vsub.add_parser("ladder")
    a.add_argument("file", nargs="?")
    a.add_argument("--k", type=int)
    a = vsub.add_parser("relations")
    a.add_argument("file", nargs="?")
    a = vsub.add_parser("negative")
    a.add_argument("--k", type=int, default=2)
    a.add_argument("--q", type=int, default=8)
    a.add_argument("--eps", type=rat, default=Fraction(1, 2))
    a.add_argument("--random", type=int, default=50, help="number of random-strategy seeds")
    a.add_argument("--seed", type=int, default=seed)

    s = sub.add_parser("generate", help="write an instance")
    gsub = s.add_subparsers(dest="kind", required=True, parser_class=parser_class)
    g = gsub.add_parser("vector")
    g.add_argument("--n", type=int, default=2)
    g.add_argument("--class", dest="cls", choices=["xos", "subadditive"], default="xos")
    g = gsub.add_parser("triangles")
    g.add_argument("--n", type=int, default=3)
    g = gsub.add_parser("negative")
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--q", type=int, default=8)
    g.add_argument("--eps", type=rat, default=Fraction(1, 2))
    g = gsub.add_parser("random")
    g.add_argument("--class", dest="cls", choices=["additive", "xos", "subadditive"], default="xos")
    g.add_argument("--m", type=int, default=5)
    g.add_argument("--n", type=int, default=2)
    g.add_argument("--unequal", action="store_true", help="random entitlements")
    g.add_argument("--seed", type=int, default=seed)

    s = sub.add_parser("exante", help="best lottery relative to a share")
    s.add_argument("file", nargs="?")
    s.add_argument("--share", choices=["mes", "mms"], default="mes")
    return p


def _dispatch(args, stdin, out) -> None:
    cmd = args.command
    if cmd == "generate":
        return cmd_generate(args, out)
    if cmd == "verify":
        if args.what == "appendix":
            return cmd_verify_appendix(args, out)
        if args.what == "negative":
            return cmd_verify_negative(args, out)
        inst = _read_instance(args.file, stdin)
        return (cmd_verify_ladder if args.what == "ladder" else cmd_verify_relations)(args, inst, out)
    inst = _read_instance(args.file, stdin)
    {"shares": cmd_shares, "allocate": cmd_allocate, "bid": cmd_bid, "exante": cmd_exante}[cmd](
        args, inst, out
    )


def main(argv=None, stdin=None, stdout=None, stderr=None) -> int:
    stdin = sys.stdin if stdin is None else stdin
    out = sys.stdout if stdout is None else stdout
    err = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be positive")
        _dispatch(args, stdin, out)
    except Falsification as exc:
        _emit({"falsification": type(exc).__name__, "message": str(exc)}, out)
        return 2
    except (UsageError, FairshareError, ValueError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
