"""Command-line front door.

Subcommands: gen-data, train, attack, certify, rl-train, rl-eval.  Every
run writes its artifacts plus a manifest.json into --out-dir; --replay
re-runs a manifest and verifies the outputs byte for byte.  Exit codes:
0 ok, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys

import numpy as np

from . import cartpole as cp
from .attacks import parse_attack_spec
from .certificates import certificate, test_worst_case
from .costs import parse_cost
from .data import (
    CsvSchema,
    SyntheticSpec,
    gen_synthetic,
    load_csv,
    load_idx_dataset,
    norm_stats,
    write_csv,
)
from .innermax import InnerSolverConfig
from .manifest import MANIFEST_NAME, load_manifest, verify_outputs, write_manifest
from .nets import SmoothNet
from .training import DivergenceError, TrainConfig, train

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


PRESETS = {
    "synthetic-wrm": {
        "net": {"dims": [2, 4, 2, 2], "activation": "elu", "head": "softmax_xent"},
        "data": {"kind": "synthetic", "n": 400, "seed": 7},
        "cost": "covshift:sq-l2",
        "train": {
            "method": "wrm", "gamma": 2.0, "steps": 600, "lr": 0.05,
            "batch_size": 32, "seed": 7, "inner_steps": 15,
        },
    },
    "synthetic-erm": {
        "net": {"dims": [2, 4, 2, 2], "activation": "elu", "head": "softmax_xent"},
        "data": {"kind": "synthetic", "n": 400, "seed": 7},
        "cost": "covshift:sq-l2",
        "train": {"method": "erm", "steps": 600, "lr": 0.05, "batch_size": 32, "seed": 7},
    },
    "synthetic-fgm": {
        "net": {"dims": [2, 4, 2, 2], "activation": "elu", "head": "softmax_xent"},
        "data": {"kind": "synthetic", "n": 400, "seed": 7},
        "cost": "covshift:sq-l2",
        "train": {
            "method": "fgm", "eps": 0.4, "steps": 600, "lr": 0.05,
            "batch_size": 32, "seed": 7, "attack_p": 2,
        },
    },
    "mnist-smoke": {
        "net": {"dims": [784, 32, 10], "activation": "elu", "head": "softmax_xent"},
        "data": {"kind": "idx", "dir": "data/mnist", "limit": 500},
        "cost": "covshift:sq-l2",
        "gamma_scale_C2": 0.04,
        "train": {"method": "wrm", "gamma": 1.0, "steps": 300, "lr": 0.05, "batch_size": 32, "seed": 3},
    },
    "cartpole-nominal": {"rl": {"robust": False, "episodes": 2000, "seed": 2}},
    "cartpole-robust": {"rl": {"robust": True, "gamma": 150.0, "episodes": 2000, "seed": 2}},
}


def load_config(args) -> dict:
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}"
            )
        cfg = copy.deepcopy(PRESETS[args.preset])
    elif getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}")
    else:
        cfg = {}
    for item in getattr(args, "set", None) or []:
        key, _, val = item.partition("=")
        if not _:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        try:
            node[parts[-1]] = json.loads(val)
        except json.JSONDecodeError:
            node[parts[-1]] = val
    if getattr(args, "seed", None) is not None:
        for section in ("train", "data", "rl"):
            if section in cfg:
                cfg[section]["seed"] = args.seed
    return cfg


def _require(cfg, path):
    node = cfg
    for p in path.split("."):
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"config missing required field {path!r}")
        node = node[p]
    return node


def build_dataset(dcfg):
    kind = _require({"d": dcfg}, "d.kind")
    if kind == "synthetic":
        return gen_synthetic(SyntheticSpec(n=int(dcfg.get("n", 400)), seed=int(dcfg.get("seed", 0))))
    if kind == "csv":
        schema = CsvSchema(
            label_column=dcfg.get("label", "y"),
            classification=bool(dcfg.get("classification", True)),
        )
        return load_csv(_require({"d": dcfg}, "d.path"), schema)
    if kind == "idx":
        base = dcfg.get("dir", "data/mnist")
        images = dcfg.get("images", os.path.join(base, "train-images-idx3-ubyte"))
        labels = dcfg.get("labels", os.path.join(base, "train-labels-idx1-ubyte"))
        if not (os.path.exists(images) and os.path.exists(labels)):
            raise ConfigError(f"IDX files not found under {base!r}")
        return load_idx_dataset(images, labels, limit=dcfg.get("limit"))
    raise ConfigError(f"unknown data kind {kind!r}")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _parse_floats(text):
    return [float(v) for v in text.split(",") if v.strip() != ""]


# -- commands -----------------------------------------------------------------


def cmd_gen_data(args):
    cfg = load_config(args)
    n = int(cfg.get("data", {}).get("n", 1000))
    seed = int(cfg.get("data", {}).get("seed", args.seed if args.seed is not None else 0))
    data = gen_synthetic(SyntheticSpec(n=n, seed=seed))
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "data.csv")
    write_csv(out, data)
    write_manifest(args.out_dir, "gen-data", {"data": {"kind": "synthetic", "n": n, "seed": seed}}, ["data.csv"], seed=seed)
    print(f"wrote {out} ({n} samples)")
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args)
    ncfg = _require(cfg, "net")
    tcfg = _require(cfg, "train")
    data = build_dataset(_require(cfg, "data"))
    cost = parse_cost(cfg.get("cost", "covshift:sq-l2"))

    gamma = tcfg.get("gamma")
    if cfg.get("gamma_scale_C2"):
        gamma = float(cfg["gamma_scale_C2"]) * norm_stats(data, 2)
    try:
        train_cfg = TrainConfig(
            method=tcfg.get("method", "erm"),
            gamma=gamma if tcfg.get("method") == "wrm" else None,
            eps=tcfg.get("eps") if tcfg.get("method") in ("fgm", "ifgm", "pgm") else None,
            steps=int(tcfg.get("steps", 100)),
            lr=float(tcfg.get("lr", 0.01)),
            lr_schedule=tcfg.get("lr_schedule", "constant"),
            batch_size=int(tcfg.get("batch_size", 32)),
            seed=int(tcfg.get("seed", 0)),
            attack_p=math.inf if tcfg.get("attack_p") in ("inf", math.inf) else float(tcfg.get("attack_p", 2)),
            attack_steps=int(tcfg.get("attack_steps", 15)),
            inner=InnerSolverConfig(
                steps=int(tcfg.get("inner_steps", 15)),
                eta0=float(tcfg.get("inner_eta0", 1.0)),
                tol=float(tcfg.get("inner_tol", 0.0)),
            ),
        )
        model = SmoothNet.random(
            ncfg["dims"], ncfg.get("activation", "elu"),
            ncfg.get("head", "softmax_xent"), seed=train_cfg.seed,
        )
    except (ValueError, KeyError) as e:
        raise ConfigError(str(e))

    os.makedirs(args.out_dir, exist_ok=True)
    try:
        trained, report = train(model, data, train_cfg, cost)
    except DivergenceError as e:
        e.model.save(os.path.join(args.out_dir, "model.json"))
        e.report.write_csv(os.path.join(args.out_dir, "train_report.csv"))
        write_manifest(args.out_dir, "train", cfg, ["model.json", "train_report.csv"], seed=train_cfg.seed)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    trained.save(os.path.join(args.out_dir, "model.json"))
    report.write_csv(os.path.join(args.out_dir, "train_report.csv"))
    write_manifest(args.out_dir, "train", cfg, ["model.json", "train_report.csv"], seed=train_cfg.seed)
    if report.surrogate:
        print(
            f"trained {train_cfg.method} for {train_cfg.steps} steps: "
            f"surrogate {report.surrogate[0]:.4f} -> {report.surrogate[-1]:.4f}, "
            f"rho {report.rho[-1]:.5f}"
        )
    else:
        print("trained for 0 steps (initial model saved)")
    return EXIT_OK


def _error_rate(model, points):
    wrong = sum(1 for z in points if model.predict_class(z.x) != int(z.y))
    return wrong / len(points)


def cmd_attack(args):
    cfg = load_config(args)
    for name in ("model", "data", "attack"):
        if getattr(args, name) is None:
            raise ConfigError(f"--{name} is required")
    model = SmoothNet.load(args.model)
    data = load_csv(args.data)
    if not data:
        raise ConfigError("empty attack dataset")
    if data[0].x.shape[0] != model.input_dim:
        print(
            f"error: data dim {data[0].x.shape[0]} != model dim {model.input_dim}",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    try:
        spec = parse_attack_spec(args.attack)
    except ValueError as e:
        raise ConfigError(f"bad attack spec: {e}")
    cost = parse_cost(cfg.get("cost", "covshift:sq-l2"))
    clip_box = tuple(_parse_floats(args.clip_box)) if args.clip_box else None

    budgets = _parse_floats(args.sweep) if args.sweep else [
        spec.gamma if spec.method == "wrm" else spec.eps
    ]
    rows = []
    for budget in budgets:
        s = spec.with_budget(budget)
        pts = [s.perturb(model, z, cost=cost, clip_box=clip_box) for z in data]
        rows.append([budget, _error_rate(model, pts), len(pts)])
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "attack_report.csv")
    budget_col = "gamma_adv" if spec.method == "wrm" else "eps_adv"
    _write_rows(out, [budget_col, "error_rate", "n"], rows)
    write_manifest(
        args.out_dir, "attack",
        {"model": args.model, "data": args.data, "attack": args.attack,
         "sweep": budgets, "cost": cost.describe(), "clip_box": clip_box},
        ["attack_report.csv"],
    )
    print(f"wrote {out}")
    return EXIT_OK


def cmd_certify(args):
    cfg = load_config(args)
    for name in ("model", "data", "gamma"):
        if getattr(args, name) is None:
            raise ConfigError(f"--{name} is required")
    model = SmoothNet.load(args.model)
    data = load_csv(args.data)
    cost = parse_cost(cfg.get("cost", "covshift:sq-l2"))
    gamma = float(args.gamma)
    inner = InnerSolverConfig(steps=int(args.inner_steps))

    rho_grid = _parse_floats(args.rho_grid) if args.rho_grid else list(np.linspace(0, 0.5, 11))
    cert = certificate(model, data, gamma, cost, rho_grid, inner, workers=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    cert_path = os.path.join(args.out_dir, "certificate.csv")
    _write_rows(cert_path, ["rho", "certificate_bound"], [[r, b] for r, b in cert.curve])

    sweep = _parse_floats(args.gamma_adv_sweep) if args.gamma_adv_sweep else list(
        np.logspace(np.log10(gamma / 4), np.log10(gamma * 16), 10)
    )
    test_data = load_csv(args.test_data) if args.test_data else data
    rows = []
    for g_adv in sweep:
        rho_t, worst = test_worst_case(model, test_data, g_adv, cost, inner)
        rows.append([g_adv, rho_t, worst])
    worst_path = os.path.join(args.out_dir, "worst_case.csv")
    _write_rows(worst_path, ["gamma_adv", "rho_test", "worst_value"], rows)

    write_manifest(
        args.out_dir, "certify",
        {"model": args.model, "data": args.data, "test_data": args.test_data,
         "gamma": gamma, "rho_grid": rho_grid, "gamma_adv_sweep": sweep,
         "cost": cost.describe(), "inner_steps": inner.steps},
        ["certificate.csv", "worst_case.csv"],
    )
    print(
        f"gamma={gamma}: mean surrogate {cert.mean_surrogate:.5f}, "
        f"achieved radius rho_hat {cert.rho_hat:.5f}"
    )
    print("note: statistical error term omitted (covering-number constants not computed)")
    return EXIT_OK


def cmd_rl_train(args):
    cfg = load_config(args)
    rl = cfg.get("rl", {})
    world = cp.CartPoleWorld()
    q, lengths = cp.train_agent(
        world,
        robust=bool(rl.get("robust", False)),
        gamma=float(rl.get("gamma", 20.0)),
        episodes=int(rl.get("episodes", 1000)),
        seed=int(rl.get("seed", 0)),
        alpha=float(rl.get("alpha", 0.1)),
        discount=float(rl.get("discount", 0.99)),
        mode=rl.get("mode", "drop_q_term"),
    )
    os.makedirs(args.out_dir, exist_ok=True)
    q.save(os.path.join(args.out_dir, "qtable.json"))
    _write_rows(
        os.path.join(args.out_dir, "rl_train_trace.csv"),
        ["episode", "length"], list(enumerate(lengths)),
    )
    write_manifest(args.out_dir, "rl-train", cfg, ["qtable.json", "rl_train_trace.csv"], seed=rl.get("seed", 0))
    tail = lengths[-100:] if len(lengths) >= 100 else lengths
    print(f"trained {len(lengths)} episodes; mean length over last {len(tail)}: {np.mean(tail):.1f}")
    return EXIT_OK


def cmd_rl_eval(args):
    if args.qtable is None:
        raise ConfigError("--qtable is required")
    names = [n.strip() for n in args.variants.split(",")] if args.variants != "all" else list(cp.VARIANTS)
    for name in names:
        if name not in cp.VARIANTS:
            raise ConfigError(f"unknown variant {name!r}; choose from {cp.VARIANTS}")
    q = cp.QTable.load(args.qtable)
    world = cp.CartPoleWorld()
    rows = []
    for name in names:
        mean, stderr = cp.evaluate(q, cp.make_variant(world, name), args.trials, seed=args.seed or 0)
        rows.append([name, mean, stderr])
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "rl_eval.csv")
    _write_rows(out, ["variant", "mean_length", "stderr"], rows)
    write_manifest(
        args.out_dir, "rl-eval",
        {"qtable": args.qtable, "variants": names, "trials": args.trials, "seed": args.seed or 0},
        ["rl_eval.csv"],
    )
    for name, mean, stderr in rows:
        print(f"{name:>10}: {mean:6.1f} +- {stderr:.1f}")
    return EXIT_OK


# -- replay ---------------------------------------------------------------------


def cmd_replay(args):
    manifest = load_manifest(args.replay)
    command = manifest["command"]
    cfg_path = os.path.join(args.out_dir, "_replay_config.json")
    os.makedirs(args.out_dir, exist_ok=True)
    with open(cfg_path, "w") as fh:
        json.dump(manifest["config"], fh)

    argv = [command, "--config", cfg_path, "--out-dir", args.out_dir]
    if command == "attack":
        c = manifest["config"]
        argv = [
            "attack", "--model", c["model"], "--data", c["data"],
            "--attack", c["attack"], "--out-dir", args.out_dir,
            "--sweep", ",".join(repr(b) for b in c["sweep"]),
        ]
        if c.get("clip_box"):
            argv += ["--clip-box", ",".join(repr(v) for v in c["clip_box"])]
    elif command == "certify":
        c = manifest["config"]
        argv = [
            "certify", "--model", c["model"], "--data", c["data"],
            "--gamma", repr(c["gamma"]), "--out-dir", args.out_dir,
            "--rho-grid", ",".join(repr(v) for v in c["rho_grid"]),
            "--gamma-adv-sweep", ",".join(repr(v) for v in c["gamma_adv_sweep"]),
            "--inner-steps", str(c["inner_steps"]),
        ]
        if c.get("test_data"):
            argv += ["--test-data", c["test_data"]]
    elif command == "rl-eval":
        c = manifest["config"]
        argv = [
            "rl-eval", "--qtable", c["qtable"], "--variants", ",".join(c["variants"]),
            "--trials", str(c["trials"]), "--seed", str(c["seed"]), "--out-dir", args.out_dir,
        ]

    code = main(argv)
    if code != EXIT_OK:
        return code
    bad = verify_outputs(manifest, args.out_dir)
    if bad:
        print(f"replay mismatch in: {', '.join(bad)}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"replay of {command!r} reproduced {len(manifest['outputs'])} artifact(s) byte-identically")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def _add_common(p, config=True):
    p.add_argument("--out-dir", default="out", help="artifact directory")
    p.add_argument("--seed", type=int, default=None, help="override config seeds")
    p.add_argument("--threads", type=int, default=1, help="worker cap for batch ops")
    p.add_argument("--replay", default=None, help="manifest.json to replay and verify")
    if config:
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--preset", default=None, help=f"one of {sorted(PRESETS)}")
        p.add_argument("--set", action="append", metavar="KEY=VAL", help="override a config field (dotted path)")


def build_parser():
    ap = argparse.ArgumentParser(prog="wdro", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset as CSV")
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model (erm / fgm / ifgm / pgm / wrm)")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="sweep an attack over a model and dataset")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--attack", help='e.g. "pgm:p=inf,eps=0.1,T=15" or "wrm:gamma=2"')
    p.add_argument("--sweep", default=None, help="comma-separated budgets")
    p.add_argument("--clip-box", default=None, help="lo,hi box clipping for image data")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("certify", help="certificate curve and worst-case interrogation")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--test-data", default=None)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho-grid", default=None)
    p.add_argument("--gamma-adv-sweep", default=None)
    p.add_argument("--inner-steps", type=int, default=30)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("rl-train", help="train a cart-pole agent (nominal or robust)")
    _add_common(p)
    p.set_defaults(func=cmd_rl_train)

    p = sub.add_parser("rl-eval", help="evaluate a Q-table across environment variants")
    _add_common(p, config=False)
    p.add_argument("--qtable")
    p.add_argument("--variants", default="all", help=f"comma list from {cp.VARIANTS}")
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(func=cmd_rl_eval)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if getattr(args, "replay", None):
            return cmd_replay(args)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
