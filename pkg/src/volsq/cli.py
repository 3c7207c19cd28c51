"""Command line entry point ``volsq``.

Exit codes: 0 on success, 1 when validation fails, 2 on a bad config.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys

import numpy as np

from .data import (
    CovarianceEstimate,
    RngState,
    conditioning_number,
    estimate_covariance,
    load_distribution_spec,
)
from .errors import ConfigInvalid, VolsqError
from .experiment import ExperimentConfig, run_convergence_experiment, write_outputs
from .rescaled import (
    RejectionConfig,
    gaussian_vs_sample,
    rejection_sampler,
    vs_sample_size_k,
)
from .validation import run_validation_suite
from .volume import reverse_iterative_sample

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or cfg.output_path
    if out is None:
        raise ConfigInvalid("no output directory (use --out or output_path)")
    result = run_convergence_experiment(cfg, threads=args.threads)
    summary = write_outputs(result, cfg, out)
    for key, slope in sorted(summary["slopes"].items()):
        print(f"{key}: log-log slope {slope if slope is None else round(slope, 3)}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    results = run_validation_suite(args.seed)
    for r in results:
        print(json.dumps(r.as_dict(), sort_keys=True))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def _cmd_sample(args) -> int:
    spec = load_distribution_spec(args.dist)
    dist = spec.dist
    seed = args.seed if args.seed is not None else (spec.seed or 0)
    gen = RngState(seed).generator()
    k = args.k
    if k < dist.d:
        raise ConfigInvalid(f"--k {k} must be at least d={dist.d}")

    if args.method == "reverse-iterative":
        if dist.kind != "discrete":
            raise ConfigInvalid("reverse-iterative sampling needs a discrete point set")
        draw = lambda g: dist.atoms[list(reverse_iterative_sample(dist.atoms, k, g))]
    elif args.method == "gaussian":
        if dist.kind != "gaussian":
            raise ConfigInvalid("the gaussian method needs a gaussian distribution")
        draw = lambda g: gaussian_vs_sample(dist, k, g)
    else:
        eps = 1.0 / math.sqrt(2 * dist.d)
        if args.estimate_covariance:
            est = estimate_covariance(dist, eps, args.delta, rng=gen)
            K = conditioning_number(dist) / (1.0 - eps)
        else:
            est = CovarianceEstimate.exact(dist)
            K = conditioning_number(dist)
        cfg = RejectionConfig.default(dist.d, max(K, dist.d))
        d_sampler = rejection_sampler(dist, est, cfg)
        draw = lambda g: vs_sample_size_k(dist, k, d_sampler, g)

    rows = []
    for s in range(args.n_samples):
        for i, x in enumerate(np.atleast_2d(draw(gen))):
            rows.append([s, i, *(repr(float(v)) for v in x)])
    header = ["sample", "index", *(f"x{j}" for j in range(dist.d))]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volsq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("experiment", help="run the Gaussian convergence experiment")
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    e.add_argument("--seed", type=int)
    e.add_argument("--threads", type=int, default=1)
    e.set_defaults(fn=_cmd_experiment)

    v = sub.add_parser("validate", help="run the identity and oracle checks")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(fn=_cmd_validate)

    s = sub.add_parser("sample", help="draw volume-rescaled samples")
    s.add_argument("--dist", required=True)
    s.add_argument("--method", choices=["rejection", "gaussian", "reverse-iterative"], required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--n-samples", type=int, default=1)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--estimate-covariance", action="store_true",
                   help="estimate Sigma_hat from samples instead of using the exact one")
    s.add_argument("--delta", type=float, default=0.01)
    s.set_defaults(fn=_cmd_sample)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VolsqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
