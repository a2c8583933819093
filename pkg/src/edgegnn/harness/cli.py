"""Command line entry point: ``edgegnn <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from edgegnn import expressivity as ex
from edgegnn.channel import gen_channel_batch, gen_rayleigh_H, ScenarioParams
from edgegnn.errors import ConfigError
from edgegnn.gnn import GnnConfig, validate_dims
from edgegnn.harness import experiment, io
from edgegnn.harness.training import PROBLEMS, evaluate, fit_norm, make_dataset


def _read(path):
    return Path(path).read_text() if path else ""


def cmd_scenario(args):
    cfg = yaml.safe_load(_read(args.config)) or {}
    data = cfg.get("data", cfg) if isinstance(cfg, dict) else {}
    problem = args.problem or cfg.get("problem", "ls")
    K = data.get("K", 2 if problem == "pr" else 10)
    ds = make_dataset(problem, args.n or data.get("n", 1000), args.seed, K=K, N=data.get("N", 4),
                      tx_power_dbm=data.get("tx_power_dbm", 40.0), snr_db=data.get("snr_db", 10.0),
                      scenario=data.get("scenario"))
    path = Path(args.out) / f"{problem}_dataset.npz"
    io.save_dataset(path, ds)
    print(f"wrote {len(ds)} samples to {path}")


def cmd_train(args):
    spec = experiment.load_spec(args.config)
    if args.seed is not None:
        spec.seeds = [args.seed]
    res = experiment.run_experiment(spec, args.out)
    print(f"cells {res.n_cells}: computed {res.n_computed}, skipped {res.n_skipped}")
    print(f"results: {res.results_csv}")
    for row in experiment.summarize(experiment.read_results(res.results_csv)):
        if row["metric"] == "sum_rate_ratio":
            print(f"{row['config']}: ratio {row['mean']:.4f} +- {row['std']:.4f} (n={row['n']})")


def cmd_eval(args):
    model, norm, _ = io.load_checkpoint(args.checkpoint)
    ds = io.load_dataset(args.dataset)
    if norm is None:
        norm = fit_norm(ds)
    res = evaluate(model, ds, args.baseline, norm)
    print(json.dumps({"baseline": res.baseline, "sum_rate_ratio": res.sum_rate_ratio, "n": len(ds)}))


def cmd_pairs(args):
    rng = np.random.default_rng(args.seed)
    problem = args.problem or "ls"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    first, second = [], []
    for _ in range(args.n):
        if problem == "pr":
            pair = ex.gen_pair_p(gen_rayleigh_H(args.N, args.K, rng), seed=rng)
        else:
            a = gen_channel_batch(ScenarioParams(K=args.K), 1, rng)[0]
            pair = ex.gen_pair_ls(a, seed=rng, method=args.method)
        # D2D gains are ~1e-10, so the tolerance is relative to the entries
        if not ex.verify_pair(pair, atol=ex.VERIFY_ATOL * np.abs(pair.first).max()).ok:
            raise ConfigError("generated pair failed verification")
        first.append(pair.first)
        second.append(pair.second)
    path = out / f"{problem}_pairs.npz"
    np.savez(path, first=np.array(first), second=np.array(second))
    print(f"wrote {args.n} pairs to {path}")


def cmd_prob(args):
    spec = experiment.parse_probe_spec(_read(args.config), args.problem)
    seed = args.seed if args.seed is not None else spec["seed"]
    rep = ex.prob_equal_solutions(spec["problem"], spec["sizes"], spec["levels"], spec["config"], seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"prob_{spec['problem']}.csv"
    rep.to_csv(path)
    for r in rep.rows:
        eps = "" if r["eps"] is None else f" eps={r['eps']}"
        print(f"size={r['size']} level={r['level']}{eps}: {r['prob']:.3f} [{r['ci_lo']:.3f}, {r['ci_hi']:.3f}]")
    print(f"wrote {path}")


def cmd_validate(args):
    raw = yaml.safe_load(_read(args.config)) or {}
    configs = raw.get("configs", {}) if isinstance(raw, dict) else {}
    data = raw.get("data", {}) if isinstance(raw, dict) else {}
    N, K = args.N or data.get("N", 4), args.K or data.get("K", 2)
    ok_all = True
    for name, body in configs.items():
        cfg = GnnConfig(**{k: v for k, v in body.items() if k in experiment.GNN_KEYS})
        if cfg.graph_kind != "p_het":
            continue
        v = validate_dims(cfg, N, K)
        ok_all &= v["pass"]
        margins = ", ".join(f"L{x['layer']}:{x['margin_d']}/{x['margin_q']}" for x in v["layers"])
        print(f"{name}: {'pass' if v['pass'] else 'FAIL'} ({margins})")
    return 0 if ok_all else 1


def cmd_report(args):
    summary = experiment.report(args.results, args.out)
    for r in summary:
        print(f"{r['experiment']},{r['config']},{r['metric']},{r['mean']:.6g},{r['std']:.6g},{r['n']}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgegnn", description="Vertex/Edge GNN experiments for wireless policies")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=".")
        sp.add_argument("--problem", choices=PROBLEMS, default=None)
        return sp

    sp = common(sub.add_parser("scenario", help="generate a dataset"))
    sp.add_argument("--n", type=int, default=None)
    sp.set_defaults(func=cmd_scenario)
    common(sub.add_parser("train", help="run an experiment grid"), True).set_defaults(func=cmd_train)
    sp = common(sub.add_parser("eval", help="evaluate a checkpoint on a dataset"))
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--baseline", default=None)
    sp.set_defaults(func=cmd_eval)
    sp = common(sub.add_parser("pairs", help="emit constrained channel pairs"))
    sp.add_argument("--n", type=int, default=10)
    sp.add_argument("--K", type=int, default=4)
    sp.add_argument("--N", type=int, default=4)
    sp.add_argument("--method", default="walk")
    sp.set_defaults(func=cmd_pairs)
    common(sub.add_parser("prob", help="probability of equal optimal solutions")).set_defaults(func=cmd_prob)
    sp = common(sub.add_parser("validate", help="check dimension conditions of precoding configs"), True)
    sp.add_argument("--N", type=int, default=None)
    sp.add_argument("--K", type=int, default=None)
    sp.set_defaults(func=cmd_validate)
    sp = common(sub.add_parser("report", help="summarize a results CSV"))
    sp.add_argument("--results", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is None and args.cmd in ("scenario", "pairs"):
        args.seed = 0
    try:
        rc = args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
