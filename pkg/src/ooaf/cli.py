"""Command-line entry point: ``ooaf <subcommand> [flags]``.

Exit codes: 0 success, 2 invalid input, 1 failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import CATEGORY_NAMES, CloudFormatError, FeatureCloud, ObjectPair, category_by_name, load_cloud, save_cloud
from .data import (
    DEFAULT_SIGMA,
    ContactAnnotation,
    ManifestError,
    build_manifest,
    generate_dataset,
    propagate_labels,
)
from .model.checkpoint import CheckpointError

log = logging.getLogger("ooaf")

SEED_ENV = "OOAF_SEED"


class UsageError(ValueError):
    """Invalid flags or inputs detected before any computation."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


VALIDATION_ERRORS = (UsageError, ManifestError, CloudFormatError, CheckpointError, FileNotFoundError)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _csv_floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_names(text: str) -> list:
    names = [v.strip() for v in text.split(",") if v.strip()]
    for n in names:
        if n not in CATEGORY_NAMES:
            raise argparse.ArgumentTypeError(f"unknown category {n!r}")
    return names


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"global seed (falls back to ${SEED_ENV}, then 0)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads for parallel modes (default 1)")
    common.add_argument("--out", default="ooaf_out", help="output directory; nothing is written elsewhere")
    common.add_argument("--config", default=None, help="JSON file of flag values; explicit flags win")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="ooaf", description="One-shot object-to-object affordance grounding.")
    parser.add_argument("--version", action="version", version=f"ooaf {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="<command>", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-synth", parents=[common], help="write a procedural one-shot dataset")
    p.add_argument("--categories", type=_csv_names, default=list(CATEGORY_NAMES))
    p.add_argument("--n-eval", type=int, default=10)
    p.add_argument("--perturbation", type=float, default=0.3)
    p.add_argument("--n-points", type=_positive_int, default=2048)
    p.add_argument("--feature-dim", type=int, default=1024)
    p.add_argument("--feature-seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)

    p = sub.add_parser("fuse", parents=[common], help="fuse per-view feature maps onto points")
    p.add_argument("--points", required=True, help="OOAF-PC cloud whose coordinates are used")
    p.add_argument("--cameras", required=True, nargs="+", help="camera JSON files")
    p.add_argument("--mu", type=float, default=0.02)

    p = sub.add_parser("annotate", parents=[common], help="propagate contact labels onto a cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--contacts", required=True, help="text file with one 'x y z' contact per line")
    p.add_argument("--category", required=True, help="category name or id (selects the channel)")
    p.add_argument("--num-channels", type=_positive_int, default=len(CATEGORY_NAMES))
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)

    p = sub.add_parser("train", parents=[common], help="one-shot training on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--preset", choices=("default", "compact", "small"), default="default")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--num-groups", type=_positive_int, default=None)
    p.add_argument("--group-size", type=_positive_int, default=None)
    p.add_argument("--attention", choices=("joint", "self"), default=None)
    p.add_argument("--model", type=json.loads, default=None, help="JSON object of model config overrides")

    p = sub.add_parser("predict", parents=[common], help="affordance maps for one source/target pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)

    p = sub.add_parser("eval", parents=[common], help="metric report over a dataset's eval split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("occlude-eval", parents=[common], help="metrics under increasing occlusion")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--levels", type=_csv_floats, default=[10, 20, 30, 40, 50], help="percentages, e.g. 10,20,30")

    p = sub.add_parser("optimize-pose", parents=[common], help="solve for the source pose under a constraint spec")
    p.add_argument("--spec", required=True, help="built-in task name or spec JSON path")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--channel", type=int, default=None, help="affordance channel (default: the task's category id)")
    p.add_argument("--restarts", type=_positive_int, default=32)
    p.add_argument("--max-iter", type=_positive_int, default=500)

    p = sub.add_parser("render", parents=[common], help="heatmap-coloured cloud and PPM image")
    p.add_argument("--cloud", required=True)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--size", type=_positive_int, default=256)

    p = sub.add_parser("dump-embeddings", parents=[common], help="export patch tokens with part labels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "eval"), default="train")

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference check of the backward pass")
    p.add_argument("--n-points", type=_positive_int, default=64)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--max-entries", type=int, default=64, help="entries probed per tensor; 0 probes all")
    return parser


def _prescan(argv: list):
    """(subcommand, --config path) found in argv without full parsing."""
    command = next((tok for tok in argv if not tok.startswith("-")), None)
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    return command, path


def _apply_config_file(parser: argparse.ArgumentParser, command: str, path_text: str) -> None:
    """Install file values as subcommand defaults so explicit flags still override them."""
    path = Path(path_text)
    if not path.is_file():
        raise UsageError(f"--config {path}: no such file")
    try:
        values = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config {path}: invalid JSON ({exc})") from None
    if not isinstance(values, dict):
        raise UsageError(f"--config {path}: expected a JSON object")
    sub = parser._subparsers._group_actions[0].choices.get(command)  # noqa: SLF001
    if sub is None:
        return
    actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
    values = {k.replace("-", "_"): v for k, v in values.items()}
    values.pop("config", None)
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise UsageError(f"--config {path}: unknown keys for {command}: {unknown}")
    for k, v in values.items():
        action = actions[k]
        if isinstance(v, str) and action.type is not None and action.type is not str:
            try:
                v = action.type(v)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"--config {path}: bad value for {k}: {exc}") from None
        if action.choices is not None and v not in action.choices:
            raise UsageError(f"--config {path}: {k} must be one of {list(action.choices)}")
        action.required = False
        sub.set_defaults(**{k: v})


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} {p}: no such file")
    return p


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} {p}: no such directory")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_synth(args) -> int:
    if args.n_eval < 0:
        raise UsageError("--n-eval must be >= 0")
    if not 0.0 <= args.perturbation <= 0.5:
        raise UsageError("--perturbation must lie in [0, 0.5]")
    if args.feature_dim < 1:
        raise UsageError("--feature-dim must be >= 1")
    if args.noise < 0:
        raise UsageError("--noise must be >= 0")
    out = _out_dir(args)
    manifest = generate_dataset(
        out,
        args.categories,
        n_eval=args.n_eval,
        perturbation=args.perturbation,
        n_points=args.n_points,
        feature_dim=args.feature_dim,
        feature_seed=args.feature_seed,
        noise=args.noise,
        seed=args.seed,
    )
    print(f"wrote {len(manifest.categories)} categories x (1 train + {args.n_eval} eval) pairs to {out}")
    return 0


def cmd_fuse(args) -> int:
    from .fusion import fuse_cloud, load_camera

    if args.mu <= 0:
        raise UsageError("--mu must be positive")
    cloud = load_cloud(_require_file(args.points, "--points"))
    views = [load_camera(_require_file(c, "--cameras")) for c in args.cameras]
    out = _out_dir(args)
    res = fuse_cloud(cloud.points, views, mu=args.mu)
    save_cloud(FeatureCloud(cloud.points, res.cloud.features, cloud.affordance, cloud.part_labels), out / "fused.pc")
    np.savetxt(out / "coverage.txt", res.coverage, fmt="%d")
    if res.mask is not None:
        np.savetxt(out / "mask.txt", res.mask, fmt="%.9g")
    covered = int(np.count_nonzero(res.coverage))
    print(f"fused {len(views)} views onto {len(cloud)} points ({covered} seen by at least one view)")
    return 0


def _category(text: str):
    if text.isdigit():
        return int(text)
    try:
        return category_by_name(text).id
    except (KeyError, ValueError):
        raise UsageError(f"unknown category {text!r}") from None


def cmd_annotate(args) -> int:
    if args.sigma <= 0:
        raise UsageError("--sigma must be positive")
    ch = _category(args.category)
    if ch >= args.num_channels:
        raise UsageError(f"category channel {ch} needs --num-channels > {ch}")
    cloud = load_cloud(_require_file(args.cloud, "--cloud"))
    try:
        contacts = np.loadtxt(_require_file(args.contacts, "--contacts"), ndmin=2)
    except ValueError as exc:
        raise UsageError(f"--contacts: {exc}") from None
    if contacts.size == 0 or contacts.shape[1] != 3:
        raise UsageError("--contacts must hold one 'x y z' row per contact")
    ann = ContactAnnotation(contacts, args.sigma)
    try:
        ann.check_on_cloud(cloud)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    aff = np.zeros((len(cloud), args.num_channels))
    if cloud.affordance is not None:
        k = min(cloud.num_channels, args.num_channels)
        aff[:, :k] = cloud.affordance[:, :k]
    base = FeatureCloud(cloud.points, cloud.features, aff, cloud.part_labels)
    labeled = propagate_labels(base, ann, ch)
    out = _out_dir(args)
    save_cloud(labeled, out / "labeled.pc")
    print(f"labeled channel {ch}: {int(np.sum(labeled.affordance[:, ch] >= 0.5))} points >= 0.5")
    return 0


def _model_config(args, manifest):
    from .model.config import ModelConfig

    presets = {"default": ModelConfig, "compact": ModelConfig.compact, "small": ModelConfig.small}
    overrides = dict(args.model or {})
    if not isinstance(overrides, dict):
        raise UsageError("--model must be a JSON object")
    for flag in ("epochs", "num_groups", "group_size", "attention"):
        v = getattr(args, flag)
        if v is not None:
            overrides[flag] = v
    sample = manifest.train[manifest.categories[0].id].load()
    derived = {"feature_dim": sample.source.feature_dim, "num_channels": manifest.num_categories, "seed": args.seed}
    for k, v in derived.items():
        if k in overrides and overrides[k] != v:
            raise UsageError(f"model override {k}={overrides[k]} conflicts with the data ({v})")
        overrides[k] = v
    try:
        return presets[args.preset](**overrides) if args.preset != "default" else ModelConfig(**overrides)
    except TypeError as exc:
        raise UsageError(f"bad model override: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"bad model config: {exc}") from None


def cmd_train(args) -> int:
    from .model.checkpoint import save_checkpoint
    from .model.train import train_one_shot

    manifest = build_manifest(_require_dir(args.data, "--data"))
    cfg = _model_config(args, manifest)
    out = _out_dir(args)

    def progress(epoch, i, loss):
        if i == manifest.num_categories - 1 and (epoch + 1) % 25 == 0:
            log.info("epoch %d loss %.5f", epoch + 1, loss)

    result = train_one_shot(manifest, cfg, callback=progress)
    save_checkpoint(out / "model.ckpt", result.params, cfg)
    with open(out / "loss.csv", "w") as fh:
        fh.write("step,epoch,category,loss\n")
        k = manifest.num_categories
        for step, loss in enumerate(result.history):
            fh.write(f"{step},{step // k},{manifest.categories[step % k].name},{loss:.9g}\n")
    print(f"trained {cfg.epochs} epochs x {manifest.num_categories} samples; final loss {result.history[-1]:.5f}")
    return 0


def _load_model(path):
    from .model.checkpoint import load_checkpoint

    return load_checkpoint(_require_file(path, "--checkpoint"))


def cmd_predict(args) -> int:
    from .model.network import forward

    params, cfg = _load_model(args.checkpoint)
    src = load_cloud(_require_file(args.src, "--src"))
    tgt = load_cloud(_require_file(args.tgt, "--tgt"))
    for name, c in (("--src", src), ("--tgt", tgt)):
        if c.feature_dim != cfg.feature_dim:
            raise UsageError(f"{name}: feature dimension {c.feature_dim} does not match the checkpoint ({cfg.feature_dim})")
    pair = ObjectPair(src, tgt, category_by_name(CATEGORY_NAMES[0]))
    ps, pt = forward(pair, params, cfg)
    out = _out_dir(args)
    empty = np.zeros((len(src), 0))
    save_cloud(FeatureCloud(src.points, empty, ps, src.part_labels), out / "src_pred.pc")
    save_cloud(FeatureCloud(tgt.points, np.zeros((len(tgt), 0)), pt, tgt.part_labels), out / "tgt_pred.pc")
    print(f"wrote {cfg.num_channels}-channel predictions to {out}")
    return 0


def _eval_manifest(path):
    manifest = build_manifest(_require_dir(path, "--data"))
    if not any(manifest.eval.get(c.id) for c in manifest.categories):
        raise UsageError(f"--data {path}: eval split is empty")
    return manifest


def cmd_eval(args) -> int:
    from .metrics import evaluate

    manifest = _eval_manifest(args.data)
    params, cfg = _load_model(args.checkpoint)
    report = evaluate(manifest, params, cfg)
    out = _out_dir(args)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(report.table() + "\n")
    print(report.table())
    return 0


def cmd_occlude_eval(args) -> int:
    from .experiments import curve_csv, occlusion_curve

    levels = args.levels
    if not levels:
        raise UsageError("--levels is empty")
    for lv in levels:
        if not 5 <= lv <= 60:
            raise UsageError(f"occlusion level {lv} outside [5, 60] percent")
    manifest = _eval_manifest(args.data)
    params, cfg = _load_model(args.checkpoint)
    curve = occlusion_curve(manifest.eval_pairs(), params, cfg, [lv / 100.0 for lv in levels], seed=args.seed)
    out = _out_dir(args)
    text = curve_csv(curve)
    (out / "occlusion.csv").write_text(text)
    print(text, end="")
    return 0


def cmd_optimize_pose(args) -> int:
    from .planner import SolveOptions, SpecError, resolve_spec, solve

    try:
        spec = resolve_spec(args.spec)
    except (SpecError, FileNotFoundError) as exc:
        raise UsageError(f"--spec: {exc}") from None
    src = load_cloud(_require_file(args.src, "--src"))
    tgt = load_cloud(_require_file(args.tgt, "--tgt"))
    channel = args.channel
    if channel is None:
        if spec.task not in CATEGORY_NAMES:
            raise UsageError(f"--channel is required for task {spec.task!r}")
        channel = category_by_name(spec.task).id
    for name, c in (("--src", src), ("--tgt", tgt)):
        if c.affordance is None or channel >= c.num_channels:
            raise UsageError(f"{name}: no affordance channel {channel}")
    opts = SolveOptions(restarts=args.restarts, max_iter=args.max_iter, seed=args.seed, workers=args.threads)
    res = solve(spec, src, tgt, channel, opts)
    out = _out_dir(args)
    _write_json(
        out / "pose.json",
        {
            "task": spec.task,
            "rotation": res.transform.rotation.tolist(),
            "translation": res.transform.translation.tolist(),
            "matrix": res.transform.matrix().tolist(),
            "total_score": res.total_score,
            "term_scores": {f"{i}:{t.type}": s for i, (t, s) in enumerate(zip(spec.terms, res.term_scores))},
            "restarts_run": res.restarts_run,
            "best_restart_index": res.best_restart_index,
        },
    )
    print(f"best score {res.total_score:.6g} from restart {res.best_restart_index}")
    return 0


def cmd_render(args) -> int:
    from .render import colorize, render_ppm

    cloud = load_cloud(_require_file(args.cloud, "--cloud"))
    if cloud.affordance is None or not 0 <= args.channel < cloud.num_channels:
        raise UsageError(f"--cloud has no affordance channel {args.channel}")
    if args.size < 8:
        raise UsageError("--size must be >= 8")
    out = _out_dir(args)
    save_cloud(colorize(cloud, args.channel), out / "colored.pc")
    (out / "heatmap.ppm").write_bytes(render_ppm(cloud, args.channel, size=args.size))
    print(f"wrote colored.pc and heatmap.ppm to {out}")
    return 0


def cmd_dump_embeddings(args) -> int:
    from .model.checkpoint import dump_patch_embeddings

    manifest = build_manifest(_require_dir(args.data, "--data"))
    params, cfg = _load_model(args.checkpoint)
    pairs = manifest.train_pairs() if args.split == "train" else manifest.eval_pairs()
    if not pairs:
        raise UsageError(f"--data {args.data}: {args.split} split is empty")
    out = _out_dir(args)
    rows = dump_patch_embeddings(pairs, params, cfg, out / "embeddings.txt")
    print(f"wrote {rows} patch embeddings")
    return 0


def cmd_grad_check(args) -> int:
    from .model.gradcheck import grad_check

    if args.step <= 0:
        raise UsageError("--step must be positive")
    if args.max_entries < 0:
        raise UsageError("--max-entries must be >= 0")
    rep = grad_check(n_points=args.n_points, seed=args.seed, h=args.step, max_entries=args.max_entries or None)
    out = _out_dir(args)
    _write_json(
        out / "gradcheck.json",
        {
            "max_rel_error": rep.max_rel_error,
            "max_entry_error": rep.max_entry_error,
            "per_tensor": rep.per_tensor,
            "entries_checked": rep.entries_checked,
            "kinks_skipped": rep.kinks_skipped,
            "loss": rep.loss,
        },
    )
    print(f"max relative error {rep.max_rel_error:.3e} over {len(rep.per_tensor)} tensors ({rep.entries_checked} entries)")
    return 0


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "fuse": cmd_fuse,
    "annotate": cmd_annotate,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "occlude-eval": cmd_occlude_eval,
    "optimize-pose": cmd_optimize_pose,
    "render": cmd_render,
    "dump-embeddings": cmd_dump_embeddings,
    "grad-check": cmd_grad_check,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        command, config = _prescan(argv)
        if config is not None:
            _apply_config_file(parser, command, config)
        args = parser.parse_args(argv)
        if args.seed is None:
            args.seed = _default_seed()
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
