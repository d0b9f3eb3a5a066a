"""``alignflow`` command line: train, translate, sample, interpolate, verify, heatmap.

Every failure prints one line ``ERROR <code>: <message>`` to stderr and
exits with that code: 2 for invalid configuration or input, 3 when
training aborts on a non-finite loss, 1 when verification checks fail.
"""

from __future__ import annotations

import argparse
import json
import math
import pathlib
import sys

import numpy as np

from .autodiff import no_tape
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config
from .domains import DomainError, DomainPairSpec, generate, read_points, write_csv, write_points
from .model import AlignFlowModel, ModelError
from .training import CSVMetricsSink, TrainingAborted, make_critics, train
from .verify import SUITES, VerifyError, fresh_model, run_suites

EXIT_FAILED = 1
EXIT_INPUT = 2
EXIT_NAN = 3


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(EXIT_INPUT, message)


def _fail(code, msg):
    raise CLIError(code, " ".join(str(msg).split()))


def _load(path) -> tuple:
    if path is None:
        _fail(EXIT_INPUT, "--checkpoint is required")
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"checkpoint not found: {path}")
    except CheckpointError as e:
        _fail(EXIT_INPUT, e)


def _parse_row(text: str, dim: int, name: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        _fail(EXIT_INPUT, f"{name}: expected comma-separated numbers, got {text!r}")
    if len(vals) != dim:
        _fail(EXIT_INPUT, f"{name}: expected {dim} values, got {len(vals)}")
    return np.array(vals)


# commands


def cmd_train(args) -> int:
    if args.config is None or args.out is None:
        _fail(EXIT_INPUT, "train needs --config and --out")
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"config not found: {args.config}")
    except ConfigError as e:
        _fail(EXIT_INPUT, e)
    if args.seed is not None:
        cfg.model_seed = args.seed
        cfg.train = type(cfg.train)(**{**cfg.train.to_dict(), "seed": args.seed})
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.resolved()
    (out / "resolved-config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")

    try:
        train_set, val, _ = generate(cfg.data)
        spec = cfg.flow_spec
        model = AlignFlowModel.build(spec, cfg.sharing, seed=cfg.model_seed)
    except (DomainError, ModelError, ValueError) as e:
        _fail(EXIT_INPUT, e)
    critic_a, critic_b = make_critics(spec.dim, cfg.model_seed, **cfg.critic)
    sink = CSVMetricsSink(out / "metrics.csv")
    try:
        train(model, critic_a, critic_b, train_set.a, train_set.b, cfg.train, cfg.objective,
              sink=sink, validation=val)
    except TrainingAborted as e:
        _fail(EXIT_NAN, e)
    finally:
        sink.close()
    meta = {
        "architecture": spec.to_dict(),
        "sharing": cfg.sharing.to_dict(),
        "model_seed": cfg.model_seed,
        "critic": dict(cfg.critic),
        "objective": cfg.objective.to_dict(),
        "train": cfg.train.to_dict(),
        "data": cfg.data.to_dict(),
        "epoch": cfg.train.epochs,
        "seed": cfg.train.seed,
    }
    save_checkpoint(out / "model.ckpt", model, critic_a, critic_b, meta)
    print(f"wrote {out / 'model.ckpt'}, {out / 'metrics.csv'}, {out / 'resolved-config.json'}")
    return 0


def cmd_translate(args) -> int:
    if args.direction not in ("a2b", "b2a"):
        _fail(EXIT_INPUT, f"direction must be a2b or b2a, got {args.direction!r}")
    if args.input is None or args.out is None:
        _fail(EXIT_INPUT, "translate needs --input and --out")
    model, *_ = _load(args.checkpoint)
    try:
        x, _ = read_points(args.input)
    except FileNotFoundError:
        _fail(EXIT_INPUT, f"input not found: {args.input}")
    except (ValueError, DomainError) as e:
        _fail(EXIT_INPUT, f"{args.input}: {e}")
    tag = "b" if args.direction == "a2b" else "a"
    if x.size == 0:
        write_points(args.out, np.zeros((0, model.dim)), tag)
        return 0
    if x.shape[1] != model.dim:
        _fail(EXIT_INPUT, f"input has {x.shape[1]} columns, checkpoint dimension is {model.dim}")
    with no_tape():
        y = model.translate(x, args.direction).data
    write_points(args.out, y, tag)
    return 0


def cmd_sample(args) -> int:
    if args.n < 1:
        _fail(EXIT_INPUT, f"--n must be >= 1, got {args.n}")
    if args.out is None:
        _fail(EXIT_INPUT, "sample needs --out")
    model, *_ = _load(args.checkpoint)
    a, b = model.sample_paired(args.n, seed=args.seed or 0)
    d = model.dim
    write_csv(args.out, [f"a_{i}" for i in range(d)] + [f"b_{i}" for i in range(d)], np.hstack([a, b]))
    return 0


def cmd_interpolate(args) -> int:
    if args.steps < 2:
        _fail(EXIT_INPUT, f"--steps must be >= 2, got {args.steps}")
    if args.out is None:
        _fail(EXIT_INPUT, "interpolate needs --out")
    model, *_ = _load(args.checkpoint)
    a1 = _parse_row(args.a1, model.dim, "--a1")
    a2 = _parse_row(args.a2, model.dim, "--a2")
    phis, a_t, b_t = model.interpolate(a1, a2, args.steps)
    d = model.dim
    cols = ["phi"] + [f"a_{i}" for i in range(d)] + [f"b_{i}" for i in range(d)]
    write_csv(args.out, cols, np.column_stack([phis, a_t, b_t]))
    return 0


def cmd_verify(args) -> int:
    suites = list(SUITES) if args.suite == "all" else [args.suite]
    if args.suite != "all" and args.suite not in SUITES:
        _fail(EXIT_INPUT, f"unknown suite {args.suite!r}; choose all or one of {', '.join(SUITES)}")
    spec = None
    if args.fresh:
        model = fresh_model(seed=args.seed or 0)
    else:
        model, _, _, meta = _load(args.checkpoint)
        if "data" in meta:
            spec = DomainPairSpec(**meta["data"])
        obj = meta.get("objective", {})
        if obj and not obj.get("mle_only") and obj.get("lambda_a", 1) == 0 and obj.get("lambda_b", 1) == 0:
            print("note: model was trained adversarial-only; its latent prior was never fit, "
                  "so unconditional samples are not meaningful")
    try:
        checks = run_suites(model, suites, spec)
    except VerifyError as e:
        _fail(EXIT_INPUT, e)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if failed:
        _fail(EXIT_FAILED, f"{len(failed)} verification check(s) failed: "
              + ", ".join(f"{c.suite}/{c.name}" for c in failed))
    return 0


def density_grid(model, domain: str, grid: int, extent: float) -> np.ndarray:
    """``exp(log_prob)`` on a ``grid x grid`` lattice over ``[-extent, extent]^2``.

    Row 0 is the top of the image (largest y).
    """
    xs = np.linspace(-extent, extent, grid) if grid > 1 else np.zeros(1)
    ys = xs[::-1]
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    with no_tape():
        lp = model.log_prob(pts, domain).data
    return np.exp(lp - lp.max()).reshape(grid, grid)


def write_pgm(path, image: np.ndarray) -> None:
    """Binary P5 greymap, maxval 255, normalized so the largest value is 255."""
    peak = image.max()
    scaled = image / peak if peak > 0 else np.zeros_like(image)
    pixels = np.clip(np.rint(scaled * 255), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def cmd_heatmap(args) -> int:
    if args.grid < 1:
        _fail(EXIT_INPUT, f"--grid must be >= 1, got {args.grid}")
    if args.domain not in ("A", "B"):
        _fail(EXIT_INPUT, f"--domain must be A or B, got {args.domain!r}")
    if not (args.extent > 0 and math.isfinite(args.extent)):
        _fail(EXIT_INPUT, f"--extent must be a positive number, got {args.extent}")
    if args.out is None:
        _fail(EXIT_INPUT, "heatmap needs --out")
    model, *_ = _load(args.checkpoint)
    if model.dim != 2:
        _fail(EXIT_INPUT, f"heatmaps need a 2-D model, checkpoint has d={model.dim}")
    write_pgm(args.out, density_grid(model, args.domain, args.grid, args.extent))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="alignflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, checkpoint=True):
        if checkpoint:
            sp.add_argument("--checkpoint")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("--config")
    common(t, checkpoint=False)
    t.set_defaults(fn=cmd_train)

    t = sub.add_parser("translate", help="translate CSV points to the other domain")
    common(t)
    t.add_argument("--input")
    t.add_argument("--direction", default="a2b")
    t.set_defaults(fn=cmd_translate)

    t = sub.add_parser("sample", help="draw paired samples")
    common(t)
    t.add_argument("--n", type=int, default=1)
    t.set_defaults(fn=cmd_sample)

    t = sub.add_parser("interpolate", help="polar latent interpolation between two A points")
    common(t)
    t.add_argument("--a1", required=True, help="comma-separated coordinates")
    t.add_argument("--a2", required=True)
    t.add_argument("--steps", type=int, default=8)
    t.set_defaults(fn=cmd_interpolate)

    t = sub.add_parser("verify", help="run invariant suites")
    common(t)
    t.add_argument("--fresh", action="store_true", help="use a randomly initialized model")
    t.add_argument("--suite", default="all")
    t.set_defaults(fn=cmd_verify)

    t = sub.add_parser("heatmap", help="write a P5 greymap of a 2-D density")
    common(t)
    t.add_argument("--domain", default="A")
    t.add_argument("--grid", type=int, default=64)
    t.add_argument("--extent", type=float, default=3.0, help="half-width of the square window")
    t.set_defaults(fn=cmd_heatmap)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except CLIError as e:
        print(f"ERROR {e.code}: {e}", file=sys.stderr)
        return e.code
    except OSError as e:
        print(f"ERROR {EXIT_INPUT}: {' '.join(str(e).split())}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
