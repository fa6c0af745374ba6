"""Command-line front door binding all modules with reproducible configs.

Every subcommand resolves its configuration as: explicit flags override a
``--config`` JSON file, which overrides built-in defaults. The fully
resolved configuration is written to ``run.json`` in the output directory
together with the seed and package version; feeding that file back through
``--config`` reproduces the run exactly.

Exit codes: 0 success, 1 runtime failure (categorized message on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .errors import DatasetError, StainAugError
from .types import ImageTile

RUN_FILE = "run.json"


class UsageError(Exception):
    """Bad flags or config; maps to exit code 2."""


@dataclass(frozen=True)
class Flag:
    name: str
    type: type
    default: object = None
    required: bool = False
    help: str = ""
    choices: Optional[Tuple[str, ...]] = None
    many: bool = False

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


# One table per subcommand; `--config FILE` is added to each implicitly.
FLAGS: Dict[str, Tuple[Flag, ...]] = {
    "synth-data": (
        Flag("domains", int, 5, help="number of synthetic domains"),
        Flag("n", int, 200, help="tiles per domain"),
        Flag("size", int, 64, help="tile edge length in pixels"),
        Flag("seed", int, 0, help="generation seed"),
        Flag("prevalence", float, 0.5, help="probability a tile is tumor"),
        Flag("out", str, required=True, help="output tile directory"),
    ),
    "tile": (
        Flag("image", str, required=True, help="input image (PNG)"),
        Flag("mask", str, required=True, help="aligned binary tumor mask (PNG)"),
        Flag("size", int, 512, help="tile edge length in pixels"),
        Flag("min-tissue", float, 0.5, help="minimum tissue fraction to keep a tile"),
        Flag("source", str, None, help="source id (default: image file stem)"),
        Flag("domain", int, None, help="domain id stamped on every tile"),
        Flag("out", str, required=True, help="output tile directory"),
    ),
    "train-gan": (
        Flag("data", str, required=True, help="tile directory with manifest"),
        Flag("out", str, required=True, help="run directory for checkpoints/log"),
        Flag("iters", int, 2000, help="training iterations"),
        Flag("batch-size", int, 2, help="tiles per domain half of each batch"),
        Flag("base-channels", int, 32, help="width of the first conv layer"),
        Flag("lr", float, 1e-4, help="Adam learning rate for all three optimizers"),
        Flag("seed", int, 0, help="training seed"),
        Flag("checkpoint-every", int, 500, help="periodic checkpoint interval"),
        Flag("resume", str, None, help="checkpoint directory to resume from"),
    ),
    "augment": (
        Flag("checkpoint", str, None, help="trained model checkpoint directory"),
        Flag("in", str, required=True, help="input tile directory"),
        Flag("out", str, required=True, help="output tile directory"),
        Flag("mode", str, "domain", choices=("domain", "interpolate", "geometric", "hsv"),
             help="augmentation mode"),
        Flag("domain", str, None, help="target domain (name or index)"),
        Flag("t", float, None, help="interpolation weight toward --domain"),
        Flag("seed", int, 0, help="sampling seed"),
    ),
    "batch-metrics": (
        Flag("tiles", str, required=True, help="tile directory"),
        Flag("manifest", str, None, help="manifest CSV (default: <tiles>/manifest.csv)"),
        Flag("k", int, 10, help="neighborhood size of the mixing metric"),
        Flag("seed", int, 0, help="embedding seed"),
        Flag("method", str, "umap", choices=("umap", "pca"), help="2D embedding method"),
        Flag("out", str, required=True, help="report directory"),
    ),
    "train-classifier": (
        Flag("spec", str, required=True, help="experiment spec JSON"),
        Flag("data", str, required=True, help="tile directory with manifest"),
        Flag("out", str, required=True, help="output directory"),
    ),
    "evaluate": (
        Flag("model", str, required=True, help="saved classifier directory"),
        Flag("data", str, required=True, help="tile directory with manifest"),
        Flag("out", str, None, help="output CSV (default: <model>/eval.csv)"),
    ),
    "report": (
        Flag("results", str, required=True, many=True, help="experiment result CSVs"),
        Flag("out", str, required=True, help="output bar-chart PNG"),
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stainaug",
        description="Stain-color augmentation toolkit for histopathology tiles.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for command, flags in FLAGS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file (flags override it)")
        for f in flags:
            p.add_argument(f"--{f.name}", dest=f.dest, type=f.type, default=None,
                           choices=f.choices, help=f.help,
                           nargs="+" if f.many else None)
    return parser


def _load_config_file(path: str, command: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if isinstance(raw, dict) and "command" in raw and "config" in raw:
        if raw["command"] != command:
            raise UsageError(
                f"config was recorded for {raw['command']!r}, not {command!r}")
        raw = raw["config"]
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a JSON object")
    known = {f.dest for f in FLAGS[command]} | {"spec_inline"}
    unknown = set(raw) - known
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    return raw


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file, and explicit flags (in rising priority)."""
    merged = {f.dest: f.default for f in FLAGS[command]}
    if args.config is not None:
        merged.update(_load_config_file(args.config, command))
    for f in FLAGS[command]:
        value = getattr(args, f.dest)
        if value is not None:
            merged[f.dest] = value
    missing = [f.name for f in FLAGS[command]
               if f.required and merged.get(f.dest) is None]
    if missing:
        raise UsageError(
            "missing required flag" + ("s" if len(missing) > 1 else "")
            + ": " + ", ".join(f"--{m}" for m in missing))
    return merged


def write_run_record(out_dir: Path, command: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "version": __version__,
    }
    (out_dir / RUN_FILE).write_text(json.dumps(record, indent=1) + "\n")


def _load_tile_dir(path: str):
    from .io import load_tiles
    try:
        return load_tiles(path)
    except FileNotFoundError as exc:
        raise DatasetError(f"no tiles at {path}: {exc}") from exc


# --- subcommand handlers -------------------------------------------------


def _run_synth_data(cfg: dict) -> None:
    from .synthdata import generate
    dataset = generate(domains=cfg["domains"], tiles_per_domain=cfg["n"],
                       size=cfg["size"], seed=cfg["seed"],
                       tumor_prevalence=cfg["prevalence"])
    dataset.save(cfg["out"])


def _run_tile(cfg: dict) -> None:
    from .io import read_png, save_tiles
    from .tiling import tile_grid
    image = read_png(cfg["image"])
    mask = read_png(cfg["mask"]).mean(axis=0) > 0.5
    source = cfg["source"] or Path(cfg["image"]).stem
    pairs = tile_grid(image, mask, tile_size=cfg["size"],
                      min_tissue=cfg["min_tissue"], source_id=source,
                      domain_id=cfg["domain"])
    tiles = [t for t, _ in pairs]
    records = [r for _, r in pairs]
    names = [f"{source}_{r.grid_x}_{r.grid_y}.png" for r in records]
    save_tiles(cfg["out"], tiles, records, names=names)


def _run_train_gan(cfg: dict) -> None:
    from .gan import TrainConfig, train
    tiles, _ = _load_tile_dir(cfg["data"])
    domains = sorted({t.domain_id for t in tiles if t.domain_id is not None})
    if not domains:
        raise DatasetError("training tiles carry no domain ids")
    config = TrainConfig(
        iterations=cfg["iters"], batch_size=cfg["batch_size"],
        lr_dis=cfg["lr"], lr_eg=cfg["lr"], seed=cfg["seed"],
        checkpoint_every=cfg["checkpoint_every"],
        image_size=tiles[0].size, domain_count=len(domains),
        base_channels=cfg["base_channels"])
    train(tiles, config, cfg["out"],
          domain_names=[f"domain_{d}" for d in domains],
          resume_from=cfg["resume"])


def _resolve_target(augmenter, raw: str):
    """--domain accepts a trained domain name or an integer index."""
    names = augmenter.model.domain_names
    if raw in names:
        return names.index(raw)
    try:
        index = int(raw)
    except ValueError:
        raise UsageError(f"--domain {raw!r} is neither a domain name nor an index")
    if not 0 <= index < len(names):
        raise UsageError(f"--domain index {index} out of range [0, {len(names)})")
    return index


def _run_augment(cfg: dict) -> None:
    from .augment import Augmenter, interpolate_domains
    from .classic import geometric, hsv_augment
    from .io import read_manifest, read_png, write_png
    from .types import DomainVector

    in_dir = Path(cfg["in"])
    manifest = in_dir / "manifest.csv"
    if manifest.is_file():
        entries = read_manifest(manifest)
    else:
        entries = [(p.relative_to(in_dir).as_posix(), None)
                   for p in sorted(in_dir.rglob("*.png"))]
    if not entries:
        raise DatasetError(f"no input tiles under {in_dir}")

    mode = cfg["mode"]
    augmenter = None
    if mode in ("domain", "interpolate"):
        if cfg["checkpoint"] is None:
            raise UsageError(f"missing required flag: --checkpoint (mode {mode})")
        augmenter = Augmenter.from_checkpoint(cfg["checkpoint"])
        names = augmenter.model.domain_names
        target = (_resolve_target(augmenter, cfg["domain"])
                  if cfg["domain"] is not None else None)
        if mode == "interpolate" and target is None:
            raise UsageError("missing required flag: --domain (mode interpolate)")

    out_dir = Path(cfg["out"])
    rows = []
    for i, (rel, record) in enumerate(entries):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg["seed"], spawn_key=(400, i)))
        tile = ImageTile(read_png(in_dir / rel),
                         domain_id=record.domain_id if record else None)
        domain_out, t_out = "", ""
        if mode == "geometric":
            result = geometric(tile, rng)
        elif mode == "hsv":
            result = hsv_augment(tile, rng)
        elif mode == "domain":
            chosen = target if target is not None else int(rng.integers(len(names)))
            result = augmenter.augment(tile, target_domain=chosen, rng=rng)
            domain_out = names[chosen]
        else:
            if tile.domain_id is None:
                raise DatasetError(
                    f"{rel}: interpolation needs the source domain id "
                    "(manifest column domain_id)")
            t = cfg["t"] if cfg["t"] is not None else float(rng.uniform())
            vec = interpolate_domains(
                DomainVector.one_hot(tile.domain_id, len(names)),
                DomainVector.one_hot(target, len(names)), t)
            result = augmenter.augment(tile, target_domain=vec, rng=rng)
            domain_out, t_out = names[target], f"{t:.10g}"
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_png(path, result.pixels)
        rows.append((rel, domain_out, t_out, cfg["seed"]))

    with open(out_dir / "augmented.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("file", "domain", "t", "seed"))
        writer.writerows(rows)


def _run_batch_metrics(cfg: dict) -> None:
    from .batch_metrics import COLOR_STAT_NAMES, evaluate_batch_effects
    from .embedding import EmbedParams
    from .io import load_tiles
    source = cfg["manifest"] if cfg["manifest"] else cfg["tiles"]
    tiles, _ = load_tiles(source)
    report = evaluate_batch_effects(
        tiles, k=cfg["k"], seed=cfg["seed"],
        embed_params=EmbedParams(method=cfg["method"]))

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "stats.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLOR_STAT_NAMES + ("domain",))
        for row, d in zip(report.stats, report.domains):
            writer.writerow([f"{v:.10g}" for v in row] + [int(d)])
    with open(out / "embedding.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("x", "y", "domain"))
        for (x, y), d in zip(report.embedding, report.domains):
            writer.writerow([f"{x:.10g}", f"{y:.10g}", int(d)])
    (out / "mld.txt").write_text(f"{report.mld:.10g}\n")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 5))
    for d in np.unique(report.domains):
        pts = report.embedding[report.domains == d]
        ax.scatter(pts[:, 0], pts[:, 1], s=8, label=f"domain {d}", alpha=0.7)
    ax.set_xlabel("embedding x")
    ax.set_ylabel("embedding y")
    ax.set_title(f"mLD = {report.mld:.3f}")
    ax.legend(markerscale=2, fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "embedding.png", dpi=150)
    plt.close(fig)


def _group_tiles_by_domain(tiles: Sequence[ImageTile]) -> Dict[int, List[ImageTile]]:
    grouped: Dict[int, List[ImageTile]] = {}
    for t in tiles:
        if t.domain_id is None:
            raise DatasetError("classifier data needs a domain_id on every tile")
        grouped.setdefault(t.domain_id, []).append(t)
    return grouped


def _experiment_specs(cfg: dict) -> List[dict]:
    if cfg.get("spec_inline") is not None:
        raw = cfg["spec_inline"]
    else:
        try:
            raw = json.loads(Path(cfg["spec"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read spec {cfg['spec']}: {exc}") from exc
        cfg["spec_inline"] = raw
    return raw if isinstance(raw, list) else [raw]


def _run_train_classifier(cfg: dict) -> None:
    from .classify import ClassifierConfig, ExperimentSpec, run_experiment
    tiles, _ = _load_tile_dir(cfg["data"])
    datasets = _group_tiles_by_domain(tiles)
    out = Path(cfg["out"])
    results = out / "results.csv"
    if results.exists():
        results.unlink()
    for i, raw in enumerate(_experiment_specs(cfg)):
        clf = ClassifierConfig(**raw.get("classifier", {}))
        spec = ExperimentSpec(
            train_domain=raw["train_domain"], aug_strategy=raw["aug_strategy"],
            repeats=raw.get("repeats", 3), classifier=clf,
            gan_checkpoint=raw.get("gan_checkpoint"))
        result = run_experiment(spec, datasets,
                                model_dir=out / f"models_{i:02d}")
        result.write_csv(results, append=True)
    _write_bar_chart([results], out / "bars.png")


def _run_evaluate(cfg: dict) -> None:
    from .classify import RESULT_HEADER, TrainedClassifier, split_domain, _labels, _stack
    from .metrics import f1_tumor, pr_auc
    clf = TrainedClassifier.load(cfg["model"])
    tiles, _ = _load_tile_dir(cfg["data"])
    datasets = _group_tiles_by_domain(tiles)
    out = Path(cfg["out"]) if cfg["out"] else Path(cfg["model"]) / "eval.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_HEADER)
        for d, domain_tiles in sorted(datasets.items()):
            _, test_idx = split_domain(_labels(domain_tiles), d)
            x, y = _stack([domain_tiles[i] for i in test_idx])
            scores = clf.scores(x)
            writer.writerow([clf.train_domain, clf.strategy, 0, d,
                             f"{pr_auc(scores, y):.10g}",
                             f"{f1_tumor((scores >= 0.5).astype(int), y):.10g}"])


def _read_result_rows(paths: Sequence[str]) -> List[dict]:
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append({"aug": row["aug"],
                             "test_domain": int(row["test_domain"]),
                             "train_domain": int(row["train_domain"]),
                             "pr_auc": float(row["pr_auc"]),
                             "f1": float(row["f1"])})
    if not rows:
        raise DatasetError("result CSVs contain no rows")
    return rows


def _write_bar_chart(paths: Sequence[str], out_png: Path) -> None:
    """Grouped bars: mean PR-AUC per test domain, one group per strategy."""
    from .classify import STRATEGIES
    rows = _read_result_rows(paths)
    domains = sorted({r["test_domain"] for r in rows})
    strategies = [s for s in STRATEGIES if any(r["aug"] == s for r in rows)]
    strategies += sorted({r["aug"] for r in rows} - set(strategies))

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(domains), 4))
    width = 0.8 / max(1, len(strategies))
    x = np.arange(len(domains), dtype=np.float64)
    summary_rows = []
    for j, strat in enumerate(strategies):
        means, stds = [], []
        for d in domains:
            vals = [r["pr_auc"] for r in rows
                    if r["aug"] == strat and r["test_domain"] == d]
            mean = float(np.mean(vals)) if vals else np.nan
            std = float(np.std(vals)) if vals else np.nan
            means.append(mean)
            stds.append(std)
            summary_rows.append((strat, d, f"{mean:.10g}", f"{std:.10g}", len(vals)))
        offset = (j - (len(strategies) - 1) / 2) * width
        ax.bar(x + offset, means, width=width, yerr=stds, capsize=2, label=strat)
    train_domains = {r["train_domain"] for r in rows}
    labels = [f"{d}*" if d in train_domains else str(d) for d in domains]
    ax.set_xticks(x, labels)
    ax.set_xlabel("test domain (* = training domain)")
    ax.set_ylabel("PR-AUC")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=150)
    plt.close(fig)

    with open(out_png.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("aug", "test_domain", "mean_pr_auc", "std_pr_auc", "n"))
        writer.writerows(summary_rows)


def _run_report(cfg: dict) -> None:
    _write_bar_chart(cfg["results"], Path(cfg["out"]))


_HANDLERS = {
    "synth-data": _run_synth_data,
    "tile": _run_tile,
    "train-gan": _run_train_gan,
    "augment": _run_augment,
    "batch-metrics": _run_batch_metrics,
    "train-classifier": _run_train_classifier,
    "evaluate": _run_evaluate,
    "report": _run_report,
}


def _run_dir(command: str, cfg: dict) -> Path:
    """Directory that receives run.json for this invocation."""
    if command == "evaluate":
        return (Path(cfg["out"]).parent if cfg["out"] else Path(cfg["model"]))
    if command == "report":
        return Path(cfg["out"]).parent
    return Path(cfg["out"])


def dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = resolve_config(args.command, args)
        if args.command == "train-classifier":
            _experiment_specs(cfg)  # inline the spec file for config closure
        write_run_record(_run_dir(args.command, cfg), args.command, cfg)
        _HANDLERS[args.command](cfg)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except StainAugError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
