"""Command-line harness: simulate cases, run attacks, apply defenses,
reconstruct sequences, merge reports, and run the benchmark suites.

The default seed comes from the GRADLEAK_SEED environment variable when a
subcommand's --seed flag is omitted.  All output files are written
atomically (temp file plus rename), and reports embed the argv they were
produced with so result tables are self-describing.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import bench as bench_mod
from .baselines import idlg_single, min_column_attack
from .caseio import (decoder_from_state, load_case, load_decoder, load_report,
                     read_grd, save_case, save_decoder, save_report, write_grd,
                     write_json_atomic)
from .defense import DefenseSpec, apply_defense
from .gm import GMProblem, reconstruct
from .metrics import length_error, set_score
from .rlg import RlgConfig, extract_q, rlg_attack
from .simulator import GradientCase, Scenario, initial_state, simulate_case


def _default_seed() -> int:
    return int(os.environ.get("GRADLEAK_SEED", "0"))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradleak",
                                     description="label leakage lab for projection-layer updates")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate ground-truthed gradient cases")
    sim.add_argument("--mode", choices=["single", "batch", "sequence", "multistep"],
                     default="single")
    sim.add_argument("--n", type=int, default=1, help="samples per step / sequence length")
    sim.add_argument("--k", type=int, default=1, help="aggregated steps (multistep)")
    sim.add_argument("--d", type=int, required=True, help="latent dimension")
    sim.add_argument("--classes", type=int, required=True)
    sim.add_argument("--latent", choices=["relu", "tanh", "gauss"], default="gauss")
    sim.add_argument("--lr", type=float, default=0.1, help="per-step learning rate (multistep)")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", required=True, help="case file path (directory when --count > 1)")
    sim.add_argument("--count", type=int, default=1, help="cases to write, seeds seed..seed+count-1")
    sim.add_argument("--skip-existing", action="store_true",
                     help="resume a partial sweep by keeping files already present")
    sim.add_argument("--decoder-out", help="also save the initial projection state")
    sim.add_argument("--grd-out", help="also write the update as a raw .grd sidecar (count=1 only)")

    atk = sub.add_parser("attack", help="run an attack over case files and score it")
    atk.add_argument("attack", choices=["rlg", "idlg", "mincol"])
    atk.add_argument("cases", nargs="+", metavar="CASE")
    atk.add_argument("--assume-s", type=int, default=None)
    atk.add_argument("--use-true-s", action="store_true",
                     help="take S from each case's ground truth")
    atk.add_argument("--rank-tol", type=float, default=None)
    atk.add_argument("--no-screen", action="store_true")
    atk.add_argument("--lp-cap-infeasible", action="store_true",
                     help="treat LP pivot-cap overruns as infeasible instead of failing")
    atk.add_argument("--keep-going", action="store_true",
                     help="record per-case failures and continue")
    atk.add_argument("--jobs", type=int, default=1)
    atk.add_argument("--delta-grd", default=None,
                     help="override the update matrix from a .grd file (single case only)")
    atk.add_argument("--report", required=True)

    dfd = sub.add_parser("defend", help="rewrite a case with a compression defense applied")
    dfd.add_argument("defense", choices=["sign", "drop"])
    dfd.add_argument("case", metavar="CASE")
    dfd.add_argument("--rate", type=float, default=0.5, help="drop fraction (drop only)")
    dfd.add_argument("--out", default=None, help="output path (default: rewrite in place)")

    gmp = sub.add_parser("gm", help="gradient-matching sequence reconstruction")
    gmp.add_argument("case", metavar="CASE")
    gmp.add_argument("--decoder", required=True)
    gmp.add_argument("--bow", action="store_true",
                     help="restrict the label search to the set recovered by the rlg attack")
    gmp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    gmp.add_argument("--restarts", type=int, default=5)
    gmp.add_argument("--seed", type=int, default=None)
    gmp.add_argument("--s", type=int, default=None, help="override the sequence length")
    gmp.add_argument("--use-true-s", action="store_true")
    gmp.add_argument("--report", required=True)

    ev = sub.add_parser("eval", help="merge attack reports into one aggregate table")
    ev.add_argument("--reports", nargs="+", required=True)
    ev.add_argument("--format", choices=["json", "csv"], default="json")
    ev.add_argument("--out", default=None, help="write here instead of stdout")

    bn = sub.add_parser("bench", help="run a benchmark table suite and print pass/fail")
    bn.add_argument("--suite", choices=sorted(bench_mod.SUITES), required=True)

    return parser


def _cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.count < 1:
        raise ValueError("--count must be >= 1")
    if args.count > 1 and args.grd_out:
        raise ValueError("--grd-out only applies to a single case")

    def scenario_for(s):
        return Scenario(d=args.d, classes=args.classes, mode=args.mode,
                        n=args.n, k=args.k,
                        lrs=(args.lr,) * args.k if args.mode == "multistep" else None,
                        latent=args.latent, seed=s)

    if args.count == 1:
        path = args.out
        if os.path.isdir(path):
            path = os.path.join(path, f"case-{seed:08d}.json")
        if not (args.skip_existing and os.path.exists(path)):
            case = simulate_case(scenario_for(seed))
            save_case(path, case)
            if args.grd_out:
                write_grd(args.grd_out, case.delta_w)
        paths = [path]
    else:
        os.makedirs(args.out, exist_ok=True)
        paths = []
        for s in range(seed, seed + args.count):
            path = os.path.join(args.out, f"case-{s:08d}.json")
            paths.append(path)
            if args.skip_existing and os.path.exists(path):
                continue
            save_case(path, simulate_case(scenario_for(s)))
    if args.decoder_out:
        save_decoder(args.decoder_out, decoder_from_state(initial_state(scenario_for(seed))))
    for p in paths:
        print(p)
    return 0


def _attack_one(path: str, opts: dict) -> dict:
    start = time.perf_counter()
    entry: dict = {"case_id": path, "attack": opts["attack"]}
    try:
        bundle = load_case(path)
        case = bundle.case
        delta_w = case.delta_w
        if opts.get("delta_grd"):
            delta_w = read_grd(opts["delta_grd"])
        if opts["attack"] == "rlg":
            assume = opts["assume_s"]
            if opts["use_true_s"]:
                assume = case.true_s
            cfg = RlgConfig(rank_tol_rel=opts["rank_tol"], assume_s=assume)
            pred = rlg_attack(delta_w, cfg, use_screening=not opts["no_screen"],
                              cap_as_infeasible=opts["cap_infeasible"])
            predicted = sorted(pred.labels)
            inferred = pred.inferred_s
            entry["rank_estimate"] = pred.rank_estimate
        elif opts["attack"] == "idlg":
            label = idlg_single(delta_w)
            predicted = [label]
            inferred = 1
        else:
            pred = min_column_attack(delta_w)
            predicted = sorted(pred.labels)
            inferred = pred.inferred_s
        score = set_score(predicted, case.label_set)
        entry.update({
            "inferred_S": inferred,
            "predicted_labels": predicted,
            "set_score": {"precision": score.precision, "recall": score.recall,
                          "f1": score.f1, "exact_match": score.exact_match},
            "length_error": length_error(inferred, case.true_s),
        })
    except Exception as exc:  # recorded per case; fatality decided by the caller
        entry["error"] = f"{type(exc).__name__}: {exc}"
    entry["wall_time_ms"] = (time.perf_counter() - start) * 1000.0
    return entry


def _cmd_attack(args) -> int:
    if args.delta_grd and len(args.cases) != 1:
        raise ValueError("--delta-grd requires exactly one case")
    opts = {
        "attack": args.attack,
        "assume_s": args.assume_s,
        "use_true_s": args.use_true_s,
        "rank_tol": args.rank_tol,
        "no_screen": args.no_screen,
        "cap_infeasible": args.lp_cap_infeasible,
        "delta_grd": args.delta_grd,
    }
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            per_case = list(pool.map(_attack_one, args.cases, [opts] * len(args.cases)))
    else:
        per_case = []
        for path in args.cases:
            entry = _attack_one(path, opts)
            per_case.append(entry)
            if "error" in entry and not args.keep_going:
                break
    errored = [e for e in per_case if "error" in e]
    if errored and not args.keep_going:
        save_report(args.report, per_case, _config_echo(args))
        print(f"error: {errored[0]['case_id']}: {errored[0]['error']}", file=sys.stderr)
        return 1
    save_report(args.report, per_case, _config_echo(args))
    print(args.report)
    return 0 if not errored else 1


def _config_echo(args) -> dict:
    echo = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    echo["argv"] = sys.argv[1:]
    return echo


def _cmd_defend(args) -> int:
    bundle = load_case(args.case)
    spec = DefenseSpec(kind=args.defense, rate=args.rate if args.defense == "drop" else 0.0)
    defended = apply_defense(bundle.case.delta_w, spec)
    new_case = GradientCase(scenario=bundle.case.scenario, delta_w=defended,
                            true_labels=bundle.case.true_labels, vocab=bundle.case.vocab)
    out = args.out or args.case
    save_case(out, new_case, defense_applied=spec)
    print(out)
    return 0


def _cmd_gm(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    bundle = load_case(args.case)
    case = bundle.case
    decoder = load_decoder(args.decoder)
    if decoder.w.shape != case.delta_w.shape:
        raise ValueError(f"decoder shape {decoder.w.shape} does not match case "
                         f"update {case.delta_w.shape}")
    if args.s is not None:
        s_used = args.s
    elif args.use_true_s:
        s_used = case.true_s
    else:
        s_used, _ = extract_q(case.delta_w, RlgConfig())
    bow = None
    if args.bow:
        pred = rlg_attack(case.delta_w, RlgConfig(assume_s=s_used))
        if not pred.labels:
            raise ValueError("rlg attack recovered no labels; cannot restrict the search")
        bow = tuple(sorted(pred.labels))
    # undo the 1/S averaging of the stored update so the matching target is
    # the plain summed decoder gradient
    target = case.delta_w * float(s_used)
    prob = GMProblem(target_grad=target, decoder=decoder, s=s_used, bow=bow, lam=args.lam)
    truth = case.true_labels if case.scenario.mode == "sequence" else None
    result = reconstruct(prob, seed=seed, restarts=args.restarts, truth=truth)
    doc = {
        "version": 1,
        "config": _config_echo(args) | {"s_used": s_used,
                                        "bow": list(bow) if bow else None},
        "result": {
            "transcript": list(result.transcript),
            "final_loss": result.final_loss,
            "objective": result.objective,
            "steps": result.steps,
            "converged": result.converged,
            "restarts": result.restarts,
            "n_vars": result.n_vars,
            "wer": result.wer_vs_truth,
            "exact_match": result.exact_match,
        },
    }
    write_json_atomic(args.report, doc)
    print(args.report)
    return 0


def _cmd_eval(args) -> int:
    rows = []
    merged: list[dict] = []
    for path in args.reports:
        doc = load_report(path)
        agg = doc["aggregate"]
        attack = doc.get("config", {}).get("attack", "?")
        rows.append({"report": path, "attack": attack, **agg})
        merged.extend(doc["per_case"])
    from .caseio import aggregate_report
    rows.append({"report": "ALL", "attack": "-", **aggregate_report(merged)})
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    if args.out:
        write_json_atomic(args.out, rows) if args.format == "json" else _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _write_text(path: str, text: str) -> None:
    from .caseio import _atomic_write_bytes
    _atomic_write_bytes(path, text.encode("utf-8"))


def _cmd_bench(args) -> int:
    results = bench_mod.run_suite(args.suite)
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "attack": _cmd_attack,
        "defend": _cmd_defend,
        "gm": _cmd_gm,
        "eval": _cmd_eval,
        "bench": _cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
