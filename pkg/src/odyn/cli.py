"""Command line entry points: datagen, train, eval, plot.

Every run resolves its configuration (defaults, then config file, then
flags), writes a run manifest into the output directory before any real
work, and maps failures to stable exit codes: 1 for usage problems, 2
for data problems, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .errors import (
    DataError,
    DomainError,
    NumericalError,
    PlacementError,
    ShapeError,
    UsageError,
)
from .models import load_checkpoint, save_checkpoint
from .pipeline import (
    ResultRow,
    TrainConfig,
    evaluate,
    format_table,
    read_csv,
    train,
    write_csv,
)
from .sim import ROLES, generate_dataset, load_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

VARIANT_CHOICES = (
    "gn_pos_vel",
    "gn_segm",
    "gn_segm_no_rgbd",
    "gn_no_edges",
    "ap",
    "ap_no_interact",
    "baseline",
)


def build_id() -> str:
    """Git commit when available, package version otherwise."""
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    return f"odyn-{__version__}"


def utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


@dataclass
class RunManifest:
    """Provenance record written to the output directory before work starts."""

    command: str
    config: dict
    seed: int | None
    out_dir: str
    build: str = field(default_factory=build_id)
    version: str = __version__
    started: str = field(default_factory=utc_now)
    finished: str | None = None
    outputs: list[str] = field(default_factory=list)

    @property
    def path(self) -> str:
        return os.path.join(self.out_dir, "run_manifest.json")

    def write(self) -> None:
        os.makedirs(self.out_dir, exist_ok=True)
        body = asdict(self)
        body.pop("out_dir")
        with open(self.path, "w") as fh:
            json.dump(body, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finish(self, outputs: list[str]) -> None:
        self.finished = utc_now()
        self.outputs = sorted(set(outputs))
        self.write()


def resolve_config(defaults: dict, config_path: str | None, overrides: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    if config_path is not None:
        try:
            raw = json.loads(Path(config_path).read_text())
        except OSError as e:
            raise DataError(f"cannot read config file: {e}") from e
        except json.JSONDecodeError as e:
            raise DataError(f"{config_path}: not valid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise DataError(f"{config_path}: config must be a JSON object")
        unknown = sorted(set(raw) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        merged.update(raw)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


class Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code map."""

    def error(self, message: str):
        raise UsageError(message)


DATAGEN_DEFAULTS = {
    "role": "train3",
    "count": 200,
    "seed": 0,
    "width": 32,
    "height": 24,
    "threads": None,
}

TRAIN_DEFAULTS = {
    "variant": "gn_pos_vel",
    "preset": "desk",
    "horizon": 1,
    "epochs": 13,
    "lr": 1e-3,
    "batch": 30,
    "seed": 0,
    "curriculum": True,
    "use_latent": False,
    "latent_weight": 1.0,
    "max_steps": None,
    "target_iou": None,
}

EVAL_DEFAULTS = {
    "horizon": 1,
    "all_starts": True,
    "re_encode": False,
}


def cmd_datagen(args) -> int:
    cfg = resolve_config(
        DATAGEN_DEFAULTS,
        args.config,
        {
            "role": args.role,
            "count": args.count,
            "seed": args.seed,
            "width": args.width,
            "height": args.height,
            "threads": args.threads,
        },
    )
    manifest = RunManifest("datagen", cfg, cfg["seed"], args.out)
    manifest.write()
    man = generate_dataset(
        args.out,
        cfg["role"],
        cfg["count"],
        base_seed=cfg["seed"],
        width=cfg["width"],
        height=cfg["height"],
        threads=cfg["threads"],
    )
    outputs = [row["file"] for row in man["episodes"]] + ["dataset.json"]
    manifest.finish(outputs)
    print(f"wrote {cfg['count']} episodes to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(
        TRAIN_DEFAULTS,
        args.config,
        {
            "variant": args.variant,
            "preset": args.preset,
            "horizon": args.horizon,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch": args.batch,
            "seed": args.seed,
            "curriculum": False if args.no_curriculum else None,
            "use_latent": True if args.use_latent else None,
            "latent_weight": args.latent_weight,
            "max_steps": args.max_steps,
            "target_iou": args.target_iou,
        },
    )
    config = TrainConfig(**cfg)
    config.validate()
    manifest = RunManifest("train", cfg, config.seed, args.out)
    manifest.write()
    episodes = load_dataset(args.data)
    result = train(
        episodes, config, out_dir=args.out, resume=args.resume, log=print
    )
    stages = config.horizon if config.curriculum else 1
    last_stage = result.stages_run[-1] if result.stages_run else stages
    model_path = os.path.join(args.out, "model.odck")
    save_checkpoint(model_path, result.nets, result.adam, last_stage, cfg)
    outputs = [f"stage_{k}.odck" for k in range(1, last_stage + 1)]
    outputs += ["model.odck", "run_manifest.json"]
    manifest.finish(outputs)
    print(f"trained {config.variant} for {result.steps} steps")
    if result.train_iou is not None:
        print(f"final train mean IoU {result.train_iou:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(
        EVAL_DEFAULTS,
        args.config,
        {
            "horizon": args.horizon,
            "all_starts": False if args.opening_only else None,
            "re_encode": True if args.re_encode else None,
        },
    )
    nets, _, _, train_cfg = load_checkpoint(args.checkpoint)
    seed = int(train_cfg.get("seed", -1)) if isinstance(train_cfg, dict) else -1
    full = dict(cfg)
    full["checkpoint"] = args.checkpoint
    full["data"] = list(args.data)
    manifest = RunManifest("eval", full, seed, args.out)
    manifest.write()
    rows = []
    for data_dir in args.data:
        episodes = load_dataset(data_dir)
        report = evaluate(
            nets,
            episodes,
            cfg["horizon"],
            all_starts=cfg["all_starts"],
            re_encode=cfg["re_encode"],
        )
        rows.append(
            ResultRow.from_report(
                report,
                dataset=os.path.basename(os.path.normpath(data_dir)),
                variant=nets.variant.value,
                seed=seed,
            )
        )
    print(format_table(rows))
    csv_path = os.path.join(args.out, "results.csv")
    write_csv(rows, csv_path)
    manifest.finish(["results.csv", "run_manifest.json"])
    return EXIT_OK


def cmd_plot(args) -> int:
    rows = []
    for path in args.results:
        rows.extend(read_csv(path))
    if not args.out.endswith(".svg"):
        raise UsageError(f"plot output must be an .svg path, got {args.out!r}")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    datasets = sorted({r.dataset for r in rows})
    variants = sorted({r.variant for r in rows})
    means = {}
    for r in rows:
        means.setdefault((r.dataset, r.variant), []).append(r.mean_iou)

    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(datasets), 4.0))
    width = 0.8 / len(variants)
    for j, variant in enumerate(variants):
        xs, ys = [], []
        for i, dataset in enumerate(datasets):
            vals = means.get((dataset, variant))
            if vals is None:
                continue
            xs.append(i + (j - (len(variants) - 1) / 2) * width)
            ys.append(sum(vals) / len(vals))
        ax.bar(xs, ys, width=width, label=variant)
    ax.set_xticks(range(len(datasets)))
    ax.set_xticklabels(datasets)
    ax.set_ylabel("mean IoU")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize="small")
    fig.tight_layout()
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    fig.savefig(args.out, format="svg")
    plt.close(fig)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> Parser:
    parser = Parser(prog="odyn", description=__doc__)
    parser.add_argument("--version", action="version", version=f"odyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("datagen", help="generate an episode dataset")
    p.add_argument("--role", choices=sorted(ROLES))
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--threads", type=int, help="worker count; ODYN_THREADS otherwise")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="dataset directory")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train a predictor")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--variant", choices=VARIANT_CHOICES)
    p.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--horizon", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-curriculum", action="store_true")
    p.add_argument("--use-latent", action="store_true")
    p.add_argument("--latent-weight", type=float)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--target-iou", type=float)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on datasets")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", nargs="+", required=True, help="dataset directories")
    p.add_argument("--horizon", type=int)
    p.add_argument("--opening-only", action="store_true")
    p.add_argument("--re-encode", action="store_true")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="bar chart of results CSVs")
    p.add_argument("--results", nargs="+", required=True, help="results CSV files")
    p.add_argument("--out", required=True, help="output .svg path")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PlacementError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
