# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Command line interface: ``xgam <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import contextlib
import csv
import json
import logging
import sys

from . import bench, demo
from ._version import __version__
from .context_cpu import ContextCpu
from .core import (
    DivergedLoss,
    EmptyBall,
    GamConfig,
    InvalidInput,
    ParseError,
    init_params,
    validate_cloud,
)
from .fileio import PCF_BINARY, format_for_path, read_cloud, write_cloud
from .gam import gam_forward
from .general import JEncoder, _print, config_comment, dump_json
from .geometry import edge_geometry
from .sampling import ball_query, farthest_point_sample, knn

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

GRADCHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_options():
    common = ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument(
        "--threads",
        type=int,
        default=1,
        help="threads of the compiled context, 1 is the serial benchmark mode",
    )
    common.add_argument("--lambda", dest="lambda_", type=float, default=None)
    common.add_argument("--radius", type=float, default=None)
    common.add_argument("--k", dest="k_neighbors", type=int, default=None)
    common.add_argument("--n-centers", type=int, default=None)
    common.add_argument("--epsilon", type=float, default=None)
    common.add_argument("--no-distance", action="store_true")
    common.add_argument("--no-gradient", action="store_true")
    common.add_argument("--normalize-distance", action="store_true")
    common.add_argument(
        "--compiled",
        action="store_true",
        help="run sampling and geometry with the compiled CPU kernels",
    )
    common.add_argument("-v", "--verbose", action="count", default=0)
    return common


def build_parser():
    common = _common_options()
    parser = ArgumentParser(
        prog="xgam",
        description="Gradient attention toolkit for point clouds",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, func, help):
        pp = sub.add_parser(name, parents=[common], help=help)
        pp.set_defaults(func=func)
        return pp

    pp = add("sample", cmd_sample, "farthest point sampling")
    pp.add_argument("input")
    pp.add_argument("-o", "--output", default=None)

    pp = add("neighbors", cmd_neighbors, "ball query or kNN neighborhoods")
    pp.add_argument("input")
    pp.add_argument("-o", "--output", default=None)
    pp.add_argument("--method", choices=("ball", "knn"), default="ball")
    pp.add_argument("--search", choices=("brute", "grid"), default="brute")

    pp = add("gradients", cmd_gradients, "edge geometry dump")
    pp.add_argument("input")
    pp.add_argument("-o", "--output", default=None)

    pp = add("attend", cmd_attend, "gradient attention forward pass")
    pp.add_argument("input")
    pp.add_argument("-o", "--output", required=True)
    pp.add_argument("--channels-out", type=int, default=32)

    pp = add("bench", cmd_bench, "gradient and attention timings")
    pp.add_argument("--input", default=None)
    pp.add_argument("--n-points", type=int, default=4096)
    pp.add_argument("--reps", type=int, default=50)
    pp.add_argument("--warmup", type=int, default=bench.MIN_WARMUP)
    pp.add_argument("--k-support", type=int, default=None)
    pp.add_argument(
        "--suite", choices=("gradient", "overhead", "all"), default="gradient"
    )
    pp.add_argument("--channels-out", type=int, default=32)
    pp.add_argument("-o", "--output", default=None, help="CSV of timings")
    pp.add_argument("--json", default=None, help="JSON summary")

    for name, func, help in (
        ("demo", cmd_demo, "train the synthetic shape classifier"),
        ("ablation", cmd_ablation, "train the four attention variants"),
    ):
        pp = add(name, func, help)
        pp.add_argument("--n-per-class", type=int, default=60)
        pp.add_argument("--n-points", type=int, default=256)
        pp.add_argument("--noise", type=float, default=0.01)
        pp.add_argument("--epochs", type=int, default=30)
        pp.add_argument("--lr", type=float, default=0.01)
        pp.add_argument("--batch-size", type=int, default=None)
        pp.add_argument("--channels-out", type=int, default=32)
        pp.add_argument("-o", "--output", default=None)
        if name == "demo":
            pp.add_argument("--no-gam", action="store_true")
            pp.add_argument("--curves", default=None)

    pp = add("gradcheck", cmd_gradcheck, "finite difference verification")
    pp.add_argument("--h", type=float, default=1e-5)
    pp.add_argument("--tol", type=float, default=GRADCHECK_TOLERANCE)
    pp.add_argument("-o", "--output", default=None)

    return parser


def config_from_args(args, **defaults):
    """``GamConfig`` from ``defaults`` overridden by the flags given."""
    config = GamConfig.from_dict(defaults)
    overrides = {}
    for name in (
        "lambda_",
        "radius",
        "k_neighbors",
        "n_centers",
        "epsilon",
        "seed",
    ):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.no_distance:
        overrides["use_distance"] = False
    if args.no_gradient:
        overrides["use_gradient"] = False
    if args.normalize_distance:
        overrides["normalize_distance"] = True
    return config.replace(**overrides)


def _fit_centers(config, args, cloud):
    """Without --n-centers, sample at most every point of the cloud."""
    if args.n_centers is None and config.n_centers > cloud.n_points:
        log.info(f"using {cloud.n_points} centers")
        return config.replace(n_centers=cloud.n_points)
    return config


def context_from_args(args):
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if not args.compiled:
        if args.threads != 1:
            log.info("--threads only applies with --compiled")
        return None
    return ContextCpu(omp_num_threads=0 if args.threads == 1 else args.threads)


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fid:
            yield fid


def _write_csv(path, config, header, rows):
    with _output(path) as fid:
        fid.write(config_comment(config) + "\n")
        writer = csv.writer(fid, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value):
    return repr(float(value))


def _write_json(path, document):
    if path is None or path == "-":
        json.dump(document, sys.stdout, cls=JEncoder, indent=2)
        sys.stdout.write("\n")
    else:
        dump_json(document, path)


def _echo(config, args, **extra):
    echo = {"command": args.command, "gam": config.to_dict()}
    echo.update(extra)
    return echo


def cmd_sample(args):
    config = config_from_args(args)
    cloud = read_cloud(args.input)
    config = _fit_centers(config, args, cloud)
    centers = farthest_point_sample(
        cloud,
        config.n_centers,
        seed=config.seed,
        context=context_from_args(args),
    )
    _write_csv(
        args.output,
        _echo(config, args, input=args.input),
        ["rank", "index"],
        [[rank, int(cc)] for rank, cc in enumerate(centers)],
    )
    return EXIT_OK


def cmd_neighbors(args):
    config = config_from_args(args)
    context = context_from_args(args)
    cloud = read_cloud(args.input)
    config = _fit_centers(config, args, cloud)
    centers = farthest_point_sample(
        cloud, config.n_centers, seed=config.seed, context=context
    )
    if args.method == "knn":
        nbrs = knn(cloud, centers, config.k_neighbors, context=context)
    else:
        if args.search == "grid" and context is not None:
            raise UsageError("--search grid runs without --compiled")
        nbrs = ball_query(
            cloud,
            centers,
            config.radius,
            config.k_neighbors,
            method=args.search,
            context=context,
        )
    rows = [
        [ss, jj, int(nbrs.center_ids[ss]), int(nbrs.neighbor_ids[ss, jj])]
        for ss in range(nbrs.n_centers)
        for jj in range(nbrs.k)
    ]
    echo = _echo(
        config, args, input=args.input, method=args.method, search=args.search
    )
    _write_csv(args.output, echo, ["s", "j", "center", "neighbor"], rows)
    return EXIT_OK


def cmd_gradients(args):
    config = config_from_args(args)
    context = context_from_args(args)
    cloud = read_cloud(args.input)
    config = _fit_centers(config, args, cloud)
    centers = farthest_point_sample(
        cloud, config.n_centers, seed=config.seed, context=context
    )
    nbrs = ball_query(
        cloud, centers, config.radius, config.k_neighbors, context=context
    )
    edges = edge_geometry(cloud, nbrs, eps=config.epsilon, context=context)
    rows = []
    for ss in range(nbrs.n_centers):
        for jj in range(nbrs.k):
            dx, dy, dz = edges.rel[ss, jj]
            rows.append(
                [
                    ss,
                    jj,
                    _fmt(dx),
                    _fmt(dy),
                    _fmt(dz),
                    _fmt(edges.dist[ss, jj]),
                    _fmt(edges.grad[ss, jj]),
                ]
            )
    _write_csv(
        args.output,
        _echo(config, args, input=args.input),
        ["s", "j", "dx", "dy", "dz", "d", "g"],
        rows,
    )
    return EXIT_OK


def cmd_attend(args):
    config = config_from_args(args)
    context = context_from_args(args)
    cloud = read_cloud(args.input)
    config = _fit_centers(config, args, cloud)
    if cloud.features is None:
        log.info("input has no features, using the coordinates")
        cloud = cloud.with_features(cloud.coords)
    params = init_params(config, cloud.n_channels, args.channels_out)
    out = gam_forward(cloud, config, params, context=context)
    result = validate_cloud(cloud.coords[out.nbrs.center_ids], out.pooled)
    echo = _echo(
        config, args, input=args.input, channels_out=args.channels_out
    )
    fmt = format_for_path(args.output)
    if fmt == PCF_BINARY:
        write_cloud(result, args.output, format=fmt)
        dump_json(
            {"schema_version": 1, "config": echo},
            str(args.output) + ".json",
        )
    else:
        write_cloud(
            result, args.output, format=fmt, comment=config_comment(echo)
        )
    _print(f"wrote {out.nbrs.n_centers} centers to {args.output}")
    return EXIT_OK


def cmd_bench(args):
    if args.threads != 1:
        raise UsageError("benchmarks require --threads 1")
    config = config_from_args(
        args, n_centers=1024, k_neighbors=32, radius=0.2
    )
    context = context_from_args(args)
    if args.input is not None:
        cloud = read_cloud(args.input)
        config = _fit_centers(config, args, cloud)
    else:
        cloud = bench.make_bench_cloud(args.n_points, seed=config.seed)
    reports = []
    if args.suite in ("gradient", "all"):
        reports += bench.bench_gradient_methods(
            cloud,
            config,
            reps=args.reps,
            warmup=args.warmup,
            k_support=args.k_support,
            context=context,
        )
    if args.suite in ("overhead", "all"):
        n_channels = 3 if cloud.features is None else cloud.n_channels
        params = init_params(config, n_channels, args.channels_out)
        reports += bench.bench_gam_overhead(
            cloud,
            config,
            params,
            reps=args.reps,
            warmup=args.warmup,
            context=context,
        )
    echo = _echo(
        config,
        args,
        input=args.input,
        n_points=cloud.n_points,
        reps=args.reps,
        warmup=args.warmup,
        suite=args.suite,
    )
    with _output(args.output) as fid:
        fid.write(config_comment(echo) + "\n")
        bench.write_bench_rows(fid, reports)
    if args.json is not None:
        bench.write_bench_json(reports, args.json, config=echo)
    for report in reports:
        log.info(report.summary())
    return EXIT_OK


def cmd_demo(args):
    config = config_from_args(args, **demo.default_demo_config().to_dict())
    dataset = demo.generate_shapes(
        args.n_per_class, args.noise, seed=config.seed, n_points=args.n_points
    )
    report = demo.train_classifier(
        dataset,
        config,
        epochs=args.epochs,
        lr=args.lr,
        gam_enabled=not args.no_gam,
        batch_size=args.batch_size,
        n_channels_out=args.channels_out,
        context=context_from_args(args),
    )
    document = report.to_dict()
    document["config"] = _echo(
        config,
        args,
        n_per_class=args.n_per_class,
        noise=args.noise,
        n_points=args.n_points,
    )
    _write_json(args.output, document)
    if args.curves is not None:
        demo.write_curves_csv(report, args.curves)
    log.info(f"final test accuracy {report.final_test_accuracy:.3f}")
    return EXIT_OK


def cmd_ablation(args):
    config = config_from_args(args, **demo.default_demo_config().to_dict())
    dataset = demo.generate_shapes(
        args.n_per_class, args.noise, seed=config.seed, n_points=args.n_points
    )
    reports = demo.run_ablation(
        dataset,
        config,
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        n_channels_out=args.channels_out,
        context=context_from_args(args),
    )
    document = {
        "schema_version": demo.SCHEMA_VERSION,
        "config": _echo(
            config,
            args,
            n_per_class=args.n_per_class,
            noise=args.noise,
            n_points=args.n_points,
        ),
        "variants": {
            name: report.to_dict() for name, report in reports.items()
        },
    }
    _write_json(args.output, document)
    return EXIT_OK


def cmd_gradcheck(args):
    seed = 0 if args.seed is None else args.seed
    report = demo.gradcheck_classifier(seed=seed, h=args.h)
    document = {
        "schema_version": 1,
        "config": {
            "command": args.command,
            "seed": seed,
            "h": args.h,
            "tol": args.tol,
        },
        "passed": report.passed(args.tol),
    }
    document.update(report.to_dict())
    _write_json(args.output, document)
    if not report.passed(args.tol):
        log.error(
            f"gradient check failed: max relative error "
            f"{report.worst_rel:.3e} >= {args.tol:.1e}"
        )
        return EXIT_NUMERIC
    return EXIT_OK


def _configure_logging(verbosity):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s"
    )


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    _configure_logging(args.verbose)
    log.debug(f"arguments {vars(args)}")

    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        log.error(str(exc))
        return EXIT_USAGE
    except (InvalidInput, ParseError, EmptyBall, OSError) as exc:
        log.error(f"{type(exc).__name__}: {exc}")
        return EXIT_DATA
    except DivergedLoss as exc:
        log.error(f"{type(exc).__name__}: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
