"""Command-line entry point.

Exit codes: 0 success, 1 property or numerical failure, 2 usage error
(bad flags, invalid spec, missing files). Output is line oriented and
deterministic for a fixed seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import cost, netgraph, temporal
from .errors import MixTConvError, NumericalFailure
from .temporal import MixTConvConfig
from .tensor import load_tensor, resolve_dtype, save_tensor
from .verify import properties
from .verify.direction import MODELS, run_direction_experiment

DEFAULT_SEED = 42


class UsageError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _precision(args) -> np.dtype:
    value = os.environ.get("MXT_PRECISION") or getattr(args, "precision", None) or "f32"
    if value not in ("f32", "f64"):
        raise UsageError(f"precision must be f32 or f64, got {value!r}")
    return resolve_dtype(value)


def _mix_config(args, fallback: str | None = None) -> MixTConvConfig | None:
    if args.ks is None and args.dil is None and args.init is None:
        return MixTConvConfig.parse(fallback) if fallback else None
    base = MixTConvConfig.parse(fallback) if fallback else MixTConvConfig()
    ks = args.ks if args.ks is not None else base.kernel_sizes
    dil = args.dil if args.dil is not None else (base.dilations if args.ks is None else None)
    return MixTConvConfig(ks, dil, args.init or base.init)


def _network(args) -> netgraph.NetworkSpec:
    """Network from ``--config`` overlaid with explicit flags."""
    cfg: dict = {}
    if args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file {args.config} not found")
        with open(args.config) as fh:
            cfg = netgraph.parse_config(fh.read())
    for key, value in (
        ("net", args.net), ("frames", args.frames), ("classes", args.classes),
        ("resolution", args.resolution), ("position", args.position),
        ("temporal", args.temporal), ("width_scale", args.width_scale),
    ):
        if value is not None:
            cfg[key] = value
    mix = _mix_config(args, cfg.get("mixtconv"))
    if mix is not None:
        cfg["mixtconv"] = mix
        if cfg.get("net", "tsn") == "tsn" and args.net is None:
            cfg["net"] = "mstnet"
    return netgraph.network_from_config(cfg)


def _add_network_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value network config file (flags override it)")
    p.add_argument("--net", choices=["tsn", "mstnet"])
    p.add_argument("--frames", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--position", choices=list(netgraph.POSITIONS))
    p.add_argument("--temporal", choices=list(netgraph.TEMPORAL_KINDS))
    p.add_argument("--width-scale", dest="width_scale", type=float)
    _add_mix_flags(p)


def _add_mix_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ks", type=_int_list, help="kernel sizes, e.g. 1,3,5,7")
    p.add_argument("--dil", type=_int_list, help="dilations, one per kernel size")
    p.add_argument("--init", choices=["identity", "uniform"])


def cmd_cost(args) -> int:
    net = _network(args)
    report = cost.cost_network(net)
    for line in report.lines():
        print(line)
    if args.report:
        report.write(args.report)
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.op == "mixtconv":
        config = _mix_config(args) or MixTConvConfig()
    elif args.op == "ordinary1d":
        config = (args.ks or (3,))[0]
    else:
        config = None
    worst = 0.0
    for _ in range(args.instances):
        rep = properties.gradcheck_instance(
            args.op, config, rng, T=args.t, C=args.c, hw=args.hw, batch=args.batch, h=args.h, threshold=args.threshold
        )
        worst = max(worst, rep.max_error)
    result = properties.PropResult("gradcheck", worst <= args.threshold, worst, args.instances)
    print(result.line())
    return 0 if result.passed else 1


def cmd_equiv_shift(args) -> int:
    dtype = _precision(args)
    rng = np.random.default_rng(args.seed)
    F = rng.standard_normal((args.batch, args.t, args.c, args.hw, args.hw)).astype(dtype)
    a = temporal.shift_forward(F)
    b = temporal.mixtconv_forward(F, temporal.shift_as_mixtconv(args.c, dtype=dtype))
    err = float(np.abs(a - b).max())
    result = properties.PropResult("equiv_shift", err <= args.tol, err)
    print(result.line())
    return 0 if result.passed else 1


def cmd_forward(args) -> int:
    dtype = _precision(args)
    net = _network(args)
    if not os.path.exists(args.input):
        raise FileNotFoundError(f"input tensor {args.input} not found")
    x = load_tensor(args.input).numpy().astype(dtype)
    if args.weights:
        weights = netgraph.load_weights(args.weights, net)
    else:
        weights = netgraph.init_weights(net, seed=args.seed, dtype=dtype)
    weights = {k: _cast(w, dtype) for k, w in weights.items()}
    scores = netgraph.network_forward(net, weights, x)
    if not np.all(np.isfinite(scores)):
        raise NumericalFailure("network produced non-finite scores")
    for b, row in enumerate(scores):
        print(f"video={b} top1={int(np.argmax(row))} scores=" + ",".join(f"{v:.6g}" for v in row))
    if args.output:
        save_tensor(args.output, scores)
    return 0


def _cast(w, dtype):
    if isinstance(w, list):
        return [np.asarray(v, dtype) for v in w]
    return np.asarray(w, dtype)


def cmd_init_weights(args) -> int:
    net = _network(args)
    weights = netgraph.init_weights(net, seed=args.seed, dtype=_precision(args))
    netgraph.save_weights(args.out, weights)
    print(f"weights={args.out} tensors={len(weights)}")
    return 0


def cmd_toytrain(args) -> int:
    result = run_direction_experiment(
        model=args.model,
        kernel_sizes=args.ks,
        epochs=args.epochs,
        seed=args.seed,
        lr=args.lr,
        batch_size=args.batch,
        train_temporal=not args.freeze_temporal,
        log=print,
    )
    print(f"final model={result.model} train_acc={result.train_acc:.4f} acc={result.test_acc:.4f}")
    if args.min_acc is not None and result.test_acc < args.min_acc:
        return 1
    return 0


def cmd_props(args) -> int:
    results = [
        properties.shift_equivalence(seed=args.seed),
        *properties.gradient_suite(instances=args.instances, seed=args.seed),
        *properties.oracle_equivalence(cases=args.cases, seed=args.seed),
        properties.identity_insertion(seed=args.seed),
        properties.tsn_permutation_invariance(seed=args.seed),
        properties.mstnet_order_sensitivity(seed=args.seed),
    ]
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixtconv", description="MixTConv operators, networks and cost model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cost", help="FLOP / parameter report for a network")
    _add_network_flags(p)
    p.add_argument("--report", help="also write a structured report to this path")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("gradcheck", help="finite-difference check of a temporal op (float64)")
    p.add_argument("--op", choices=["mixtconv", "shift", "ordinary1d"], default="mixtconv")
    _add_mix_flags(p)
    p.add_argument("--t", type=int, default=8)
    p.add_argument("--c", type=int, default=12)
    p.add_argument("--hw", type=int, default=2)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("equiv-shift", help="shift vs fixed-weight MixTConv")
    p.add_argument("--c", type=int, default=64)
    p.add_argument("--t", type=int, default=8)
    p.add_argument("--hw", type=int, default=4)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--precision", choices=["f32", "f64"])
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_equiv_shift)

    p = sub.add_parser("forward", help="video scores for a serialized [B, T, 3, H, W] input")
    _add_network_flags(p)
    p.add_argument("--input", required=True, help="MXT1 tensor file")
    p.add_argument("--weights", help="weight bundle directory (default: seeded init)")
    p.add_argument("--output", help="write [B, classes] scores as an MXT1 tensor")
    p.add_argument("--precision", choices=["f32", "f64"])
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("init-weights", help="write a seeded weight bundle")
    _add_network_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--precision", choices=["f32", "f64"])
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("toytrain", help="motion-direction experiment")
    p.add_argument("--model", choices=list(MODELS), default="mixtconv")
    p.add_argument("--ks", type=_int_list, default=(3, 5))
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--freeze-temporal", action="store_true", help="keep temporal kernels at identity")
    p.add_argument("--min-acc", type=float, help="exit 1 if final test accuracy is below this")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_toytrain)

    p = sub.add_parser("props", help="run the property harness")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--cases", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_props)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MixTConvError, UsageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
