"""``cfsim`` command line: run an experiment or train the power predictor."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import InfeasibleError
from .harness import DL_PC, EXPERIMENTS, UL_ENGINES, UL_PC, ExperimentSpec, run_experiment
from .mlp import KHAT, build_dataset, save_model, train_lm
from .netgen import NetworkConfig


def load_config(path):
    """Network parameters from JSON; an optional ``"run"`` object holds
    experiment defaults that command-line flags override."""
    with open(path) as fh:
        data = json.load(fh)
    run = data.pop("run", {})
    return NetworkConfig.from_dict(data), run


def _parser():
    p = argparse.ArgumentParser(prog="cfsim", description="Cell-free IoT link-level simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment and write its result files")
    r.add_argument("--config", required=True)
    r.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--n-realizations", type=int)
    r.add_argument("--n-draws", type=int)
    r.add_argument("--ul-engine", choices=UL_ENGINES)
    r.add_argument("--ul-pc", choices=UL_PC)
    r.add_argument("--target-rate", type=float, help="bits/s/Hz; S_t = 2^R - 1")
    r.add_argument("--drop", type=int, help="number of devices to drop (K_p)")
    r.add_argument("--up", type=float, help="rate weight of dropped devices")
    r.add_argument("--dl-pc", choices=DL_PC)
    r.add_argument("--rel-tol", type=float)
    r.add_argument("--feas-tol", type=float)
    r.add_argument("--nn-model")
    r.add_argument("--khat", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--dump-channels", action="store_true", default=None)

    t = sub.add_parser("train-nn", help="build a training set and fit the power predictor")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--n-realizations", type=int, default=313)
    t.add_argument("--khat", type=int, default=KHAT)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-epochs", type=int, default=300)
    t.add_argument("--lambda0", type=float, default=1e-3)
    return p


def _run(args):
    config, run = load_config(args.config)
    fields = ("n_realizations", "n_draws", "ul_engine", "ul_pc", "target_rate", "dl_pc",
              "rel_tol", "feas_tol", "nn_model", "khat", "workers", "seed", "drop", "up",
              "dump_channels")
    opts = {k: run[k] for k in fields if k in run}
    opts.update({k: getattr(args, k) for k in fields if getattr(args, k) is not None})
    spec = ExperimentSpec(experiment=args.experiment, config=config, out_dir=args.out, **opts)
    bundle = run_experiment(spec)
    json.dump(bundle.ee, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return bundle.status


def _train(args):
    config, _ = load_config(args.config)
    ds = build_dataset(config, args.n_realizations, khat=args.khat, seed=args.seed)
    model = train_lm(ds, init_seed=args.seed, max_epochs=args.max_epochs, lambda0=args.lambda0)
    save_model(model, args.out)
    print(json.dumps({"samples": len(ds), "val_rmse": model.meta.get("val_rmse"),
                      "epochs": model.meta["epochs"], "stop": model.meta["stop"]}))
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return _run(args) if args.command == "run" else _train(args)
    except InfeasibleError as exc:
        json.dump({"error": "InfeasibleError", "message": str(exc), "devices": [int(d) for d in exc.devices]}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except Exception as exc:  # noqa: BLE001 - every failure maps to a structured exit
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
