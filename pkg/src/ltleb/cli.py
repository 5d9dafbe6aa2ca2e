"""Command-line interface: ltleb parse | check | prove | verify | refine | simulate.

Exit codes: 0 success (well-formed, holds, proved, verified, refined),
1 negative outcome (syntax error, fails, no proof, rejected, refused),
2 I/O or malformed input files, 3 indeterminate (state graph over budget).
The default node budget can be set with the LTLEB_BUDGET environment variable.
"""
from __future__ import annotations

import argparse
import json
import os
import random
import sys
from typing import List, Optional

from .fol import IndeterminateError
from .hfset import format_hf
from .machine import (
    DEFAULT_NODE_BUDGET, Machine, MachineError, build_graph, elaborate, format_state,
    simulate, trivial_extension,
)
from .oracle import DEFAULT_LASSO_BUDGET, FAILS, HOLDS, holds, holds_bruteforce
from .proof import (
    ProofFailure, ProofFormatError, ProofMachineMismatch, ProofHints, check_proof, format_tree,
    load_hints, proof_from_json, proof_to_json, prove,
)
from .refine import (
    PROJECTION_DEPTH, RefinementRefused, projection_equivalent, refine_for_conv, refine_for_div,
    variant_verified,
)
from .speclang import ParseError, parse_formula, parse_machine, parse_temporal, print_temporal

EXIT_OK, EXIT_NO, EXIT_IO, EXIT_INDETERMINATE = 0, 1, 2, 3
BUDGET_ENV = "LTLEB_BUDGET"


class _Exit(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def _default_budget() -> int:
    raw = os.environ.get(BUDGET_ENV)
    if raw is None:
        return DEFAULT_NODE_BUDGET
    try:
        return _positive(raw)
    except (ValueError, argparse.ArgumentTypeError):
        raise _Exit(EXIT_IO, f"{BUDGET_ENV}={raw!r} is not a positive integer") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--budget", type=_positive, default=None,
                        help=f"state-graph node budget (default {DEFAULT_NODE_BUDGET}, "
                             f"or ${BUDGET_ENV})")
    common.add_argument("--lasso-budget", type=_positive, default=DEFAULT_LASSO_BUDGET,
                        help="lasso budget of the brute-force oracle")
    common.add_argument("--depth", type=_positive, default=PROJECTION_DEPTH,
                        help="depth of the projected trace comparison")
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="ltleb", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", parents=[common], help="check a machine file")
    s.add_argument("machine")

    s = sub.add_parser("check", parents=[common], help="model-check a formula")
    s.add_argument("machine")
    s.add_argument("formula")
    s.add_argument("--method", choices=("fast", "brute"), default="fast")

    s = sub.add_parser("prove", parents=[common], help="search a derivation")
    s.add_argument("machine")
    s.add_argument("formula")
    s.add_argument("--hints", metavar="FILE", help="JSON hint file")
    s.add_argument("--auto-refine", action="store_true",
                   help="take variants from the refinement constructions")
    s.add_argument("-o", "--output", metavar="FILE", help="write the proof JSON here")

    s = sub.add_parser("verify", parents=[common], help="check a proof file")
    s.add_argument("proof")
    s.add_argument("machine")

    s = sub.add_parser("refine", parents=[common], help="build a refined machine")
    s.add_argument("machine")
    s.add_argument("phi")
    s.add_argument("--mode", choices=("conv", "div"), required=True)
    s.add_argument("--variant", choices=("auto", "tuple", "cardinality"), default="auto",
                   help="variant construction for div")
    s.add_argument("-o", "--output", metavar="FILE",
                   help="write the machine here and the sidecar to FILE.json")

    s = sub.add_parser("simulate", parents=[common], help="print one random run")
    s.add_argument("machine")
    s.add_argument("--steps", type=int, default=20)
    s.add_argument("--extend", action="store_true", help="run the trivial extension")
    return p


# -- helpers ------------------------------------------------------------------

def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise _Exit(EXIT_IO, f"{path}: {e.strerror or e}") from None


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as e:
        raise _Exit(EXIT_IO, f"{path}: {e.strerror or e}") from None


def _diagnostics(path: str, e: ParseError) -> str:
    return "\n".join(f"{path}:{d}" for d in e.diagnostics)


def _load(path: str) -> Machine:
    text = _read(path)
    try:
        return elaborate(parse_machine(text))
    except ParseError as e:
        raise _Exit(EXIT_NO, _diagnostics(path, e)) from None
    except MachineError as e:
        raise _Exit(EXIT_NO, f"{path}: error: {e}") from None


def _temporal(text: str, m: Machine):
    try:
        return parse_temporal(text, m)
    except ParseError as e:
        raise _Exit(EXIT_NO, _diagnostics("<formula>", e)) from None


def _emit(args, text: str, data) -> None:
    if args.format == "json":
        sys.stdout.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _budget(args) -> int:
    return args.budget if args.budget is not None else _default_budget()


# -- commands -----------------------------------------------------------------

def cmd_parse(args) -> int:
    m = _load(args.machine)
    data = {"ok": True, "machine": m.name, "variables": list(m.variables),
            "events": [e.name for e in m.events], "formulas": [n for n, _ in m.formulas]}
    _emit(args, f"ok: machine {m.name} ({len(m.variables)} variables, {len(m.events)} events, "
                f"{len(m.formulas)} formulas)", data)
    return EXIT_OK


def cmd_check(args) -> int:
    m = _load(args.machine)
    f = _temporal(args.formula, m)
    g = build_graph(trivial_extension(m), _budget(args))
    check = holds if args.method == "fast" else holds_bruteforce
    v = check(g, f, lasso_budget=args.lasso_budget)
    text = print_temporal(f)
    lines = [f"formula: {text}", f"verdict: {v.value}"]
    if v.reason:
        lines.append(f"reason: {v.reason}")
    if v.counterexample is not None:
        lines += ["counterexample:", v.counterexample.format(g)]
    _emit(args, "\n".join(lines), v.to_json(g, text))
    return {HOLDS: EXIT_OK, FAILS: EXIT_NO}.get(v.value, EXIT_INDETERMINATE)


def cmd_prove(args) -> int:
    m = _load(args.machine)
    f = _temporal(args.formula, m)
    hints = ProofHints()
    if args.hints:
        try:
            hints = load_hints(_read(args.hints), m)
        except ParseError as e:
            raise _Exit(EXIT_NO, _diagnostics(args.hints, e)) from None
        except (ValueError, KeyError, TypeError) as e:
            raise _Exit(EXIT_IO, f"{args.hints}: malformed hint file ({e})") from None
    auto = True if args.auto_refine else None
    r = prove(m, f, hints, auto_refine=auto, budget=_budget(args), depth=args.depth)
    if isinstance(r, ProofFailure):
        lines = [f"no proof of {print_temporal(f)}", f"reason: {r.reason}"]
        data = {"proved": False, "formula": print_temporal(f), "reason": r.reason}
        code = EXIT_NO
        if r.verdict is not None:
            lines.append(f"oracle: {r.verdict.value}")
            g = build_graph(trivial_extension(m), _budget(args))
            if r.verdict.counterexample is not None:
                lines += ["counterexample:", r.verdict.counterexample.format(g)]
            data["oracle"] = r.verdict.to_json(g, print_temporal(f))
            if r.verdict.value not in (HOLDS, FAILS):
                code = EXIT_INDETERMINATE
        elif r.reason.startswith("indeterminate"):
            code = EXIT_INDETERMINATE
        _emit(args, "\n".join(lines), data)
        return code
    doc = proof_to_json(r, m)
    if args.output:
        _write(args.output, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _emit(args, format_tree(r), doc)
    return EXIT_OK


def cmd_verify(args) -> int:
    raw = _read(args.proof)
    m = _load(args.machine)
    try:
        doc = json.loads(raw)
        tree = proof_from_json(doc, m)
    except (json.JSONDecodeError, ProofFormatError) as e:
        raise _Exit(EXIT_IO, f"{args.proof}: malformed proof ({e})") from None
    except ProofMachineMismatch as e:
        _emit(args, f"rejected: proof does not fit machine {m.name}: {e}",
              {"ok": False, "reason": f"machine mismatch: {e}", "node": None})
        return EXIT_NO
    if doc.get("machine") != m.name:
        reason = f"proof is about machine {doc.get('machine')!r}, not {m.name!r}"
        _emit(args, f"rejected: {reason}", {"ok": False, "reason": reason, "node": None})
        return EXIT_NO
    res = check_proof(m, tree, _budget(args), args.depth)
    if res.ok:
        _emit(args, f"ok: {tree.conclusion.text()}", res.to_json())
        return EXIT_OK
    _emit(args, f"rejected at {res.node.rule}: {res.node.conclusion.text()}\nreason: {res.reason}",
          res.to_json())
    return EXIT_INDETERMINATE if "indeterminate" in res.reason else EXIT_NO


def cmd_refine(args) -> int:
    m = _load(args.machine)
    try:
        phi = parse_formula(args.phi, m)
    except ParseError as e:
        raise _Exit(EXIT_NO, _diagnostics("<formula>", e)) from None
    budget = _budget(args)
    try:
        if args.mode == "conv":
            ref = refine_for_conv(m, phi, budget)
        else:
            ref = refine_for_div(m, phi, args.variant, budget)
    except RefinementRefused as e:
        lines = [f"refused: {e}"]
        data = {"refined": False, "reason": str(e)}
        if e.verdict is not None and e.verdict.counterexample is not None:
            g = build_graph(trivial_extension(m), budget)
            lines += ["counterexample:", e.verdict.counterexample.format(g)]
            data["counterexample"] = e.verdict.counterexample.to_json(g)
        _emit(args, "\n".join(lines), data)
        return EXIT_INDETERMINATE if e.verdict is not None and e.verdict.value not in (
            HOLDS, FAILS) else EXIT_NO
    side = ref.sidecar()
    side["variant_verified"] = variant_verified(ref, budget)
    rep = projection_equivalent(ref, args.depth, budget)
    side["projection"] = {"equal": rep.equal, "depth": rep.depth,
                          "source_words": rep.source_count, "refined_words": rep.refined_count}
    text = ref.to_text()
    if args.output:
        _write(args.output, text)
        _write(args.output + ".json", json.dumps(side, indent=2, sort_keys=True) + "\n")
        summary = (f"wrote {args.output} ({len(ref.machine.variables)} variables, "
                   f"{len(ref.machine.events)} events) and {args.output}.json\n"
                   f"variant {side['variant']}: {'verified' if side['variant_verified'] else 'NOT verified'}\n"
                   f"projected traces equal to depth {rep.depth}: {'yes' if rep.equal else 'no'}")
        _emit(args, summary, {"refined": True, "output": args.output, "sidecar": side})
    else:
        _emit(args, text, {"refined": True, "machine": text, "sidecar": side})
    return EXIT_OK


def cmd_simulate(args) -> int:
    m = _load(args.machine)
    if args.steps < 0:
        raise _Exit(EXIT_NO, "--steps must be non-negative")
    if args.extend:
        m = trivial_extension(m)
    states, labels, end = simulate(m, args.steps, random.Random(args.seed))
    lines = [f"0  {format_state(m, states[0])}"]
    steps = []
    for k, ((ev, binding), s) in enumerate(zip(labels, states[1:]), start=1):
        lab = ev + ("(" + ", ".join(f"{x}={format_hf(v)}" for x, v in binding) + ")"
                    if binding else "")
        lines.append(f"{k}  {lab}  {format_state(m, s)}")
        steps.append({"event": ev, "binding": {x: format_hf(v) for x, v in binding},
                      "state": {v: format_hf(x) for v, x in zip(m.variables, s)}})
    lines.append(f"end: {end}")
    data = {"seed": args.seed, "initial": {v: format_hf(x) for v, x in zip(m.variables, states[0])},
            "steps": steps, "end": end}
    _emit(args, "\n".join(lines), data)
    return EXIT_OK


COMMANDS = {"parse": cmd_parse, "check": cmd_check, "prove": cmd_prove, "verify": cmd_verify,
            "refine": cmd_refine, "simulate": cmd_simulate}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse usage errors
        return EXIT_IO if e.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except _Exit as e:
        if str(e):
            sys.stderr.write(str(e) + "\n")
        return e.code
    except IndeterminateError as e:
        sys.stderr.write(f"indeterminate: {e}\n")
        return EXIT_INDETERMINATE


if __name__ == "__main__":
    sys.exit(main())
