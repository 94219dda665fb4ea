"""Compare pipeline and structured training, and inference with and without constraints."""

import argparse
import dataclasses
import json
import logging

from tempjoint.experiment import ExperimentConfig, format_experiment, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--train-docs", type=int, default=200)
    ap.add_argument("--test-docs", type=int, default=50)
    ap.add_argument("--noise", type=float, default=ExperimentConfig.noise)
    ap.add_argument("--t-event", type=float, default=0.1)
    ap.add_argument("--json", help="also write the raw results here")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    cfg = ExperimentConfig(tuple(args.seeds), args.train_docs, args.test_docs, args.noise)
    cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, t_event=args.t_event))
    result = run_experiment(cfg)
    print(format_experiment(result))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(result, fh, indent=2)


if __name__ == "__main__":
    main()
