"""Command-line front end: encode, train, eval, vo-search, serve, replay.

Every subcommand maps onto one library operation and exits 0 on success,
1 on usage problems, 2 on data/configuration errors, and 3 when training
aborts on a numeric failure. Flags beat config-file values beat defaults;
the config file is plain ``key = value`` lines (keys match long flags).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .condense import RenderConfig, find_orientation, vo_table
from .datasets import (
    DATASET_IDS, SWIPE_CLASSES, dataset_class_names, parse_dataset, subset_manifest,
)
from .errors import ConfigError, GestigoError, GraphError, NumericError
from .evalharness import confusion_heatmap, evaluate, vo_search, write_report, \
    write_search_report
from .model import GestureNet, ModelConfig
from .service import (
    GestureService, parse_bind, replay_client, run_server, worker_count,
)
from .training import (
    DEFAULT_LR_GRID, MASTER_PX, TrainSettings, encode_dataset_images,
    encode_for_training, load_encoded_dataset, train,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_SUBSETS = {"swipe": SWIPE_CLASSES}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures routed to exit code 1, not 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- option value parsers -----------------------------------------------------

def _names(text: str):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _sizes(text: str):
    try:
        return tuple(int(s) for s in _names(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")


def _lr_grid(text: str):
    if text.strip().lower() in ("", "none", "off"):
        return ()
    try:
        return tuple(float(s) for s in _names(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def _read_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _config_argv(sub: argparse.ArgumentParser, mapping: dict):
    """Turn config keys into argv fragments the subparser understands."""
    by_flag = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                by_flag[opt[2:]] = action
    extra = []
    for key, value in mapping.items():
        flag = key.replace("_", "-")
        action = by_flag.get(flag)
        if action is None or flag == "config":
            raise UsageError(f"unknown config key {key!r} for {sub.prog}")
        if action.nargs == 0:
            truthy = value.lower() in ("1", "true", "yes", "on")
            falsy = value.lower() in ("0", "false", "no", "off")
            if not truthy and not falsy:
                raise UsageError(f"config key {key!r} must be true/false, got {value!r}")
            if truthy:
                extra.append(f"--{flag}")
        else:
            extra.extend([f"--{flag}", value])
    return extra


# -- parser construction ------------------------------------------------------

def _add_common(sub):
    sub.add_argument("--seed", type=int, default=17, help="RNG seed (default 17)")
    sub.add_argument("--config", metavar="FILE",
                     help="key = value file; flags override its entries")


def _add_data_source(sub, require=True):
    sub.add_argument("--root", metavar="DIR", help="raw dataset tree to parse")
    sub.add_argument("--images", metavar="DIR",
                     help="encoded-image directory from a previous `encode` run")
    sub.add_argument("--subset", choices=sorted(_SUBSETS),
                     help="restrict to a named class subset (with --root only)")
    sub.add_argument("--master-px", type=int, default=MASTER_PX,
                     help=f"render resolution before stage resizing (default {MASTER_PX})")


def _add_arch(sub):
    sub.add_argument("--encoder-widths", type=_sizes, default=None,
                     help="stream-encoder channel widths (default 16,32,64,128)")
    sub.add_argument("--tuner-widths", type=_sizes, default=None,
                     help="tuner channel widths (default 8,16)")
    sub.add_argument("--head-hidden", type=int, default=512)
    sub.add_argument("--tuner-head-hidden", type=int, default=128)
    sub.add_argument("--pseudo-px", type=int, default=224,
                     help="pseudo-image side length (default 224)")


def build_parser():
    parser = _Parser(prog="gestigo", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="cmd", metavar="COMMAND")
    table = {}

    enc = table["encode"] = subs.add_parser(
        "encode", help="condense a dataset into per-VO spatiotemporal images")
    enc.add_argument("--dataset", required=True, choices=DATASET_IDS)
    enc.add_argument("--root", required=True, metavar="DIR")
    enc.add_argument("--out", required=True, metavar="DIR")
    enc.add_argument("--vos", default="all",
                     help="comma-separated view orientations, or 'all' (default)")
    enc.add_argument("--subset", choices=sorted(_SUBSETS))
    enc.add_argument("--master-px", type=int, default=MASTER_PX)
    enc.add_argument("--workers", type=int, default=None,
                     help="parallel gestures (default GESTIGO_THREADS)")
    _add_common(enc)

    tr = table["train"] = subs.add_parser(
        "train", help="fit the multi-stream + tuner model on an encoded dataset")
    tr.add_argument("--dataset", required=True, choices=DATASET_IDS)
    _add_data_source(tr)
    tr.add_argument("--out", required=True, metavar="DIR",
                    help="directory for checkpoint, log, and epoch summary")
    tr.add_argument("--vos", default="custom,top-down,front-away",
                    help="view orientations in stream order")
    tr.add_argument("--streams", type=int, default=None,
                    help="use only the first N of --vos")
    tr.add_argument("--epochs", type=int, default=8, help="epochs per stage")
    tr.add_argument("--batch-size", type=int, default=16)
    tr.add_argument("--lr", type=float, default=1e-3,
                    help="base rate when the probe grid is disabled")
    tr.add_argument("--lr-grid", type=_lr_grid,
                    default=DEFAULT_LR_GRID, metavar="G1,G2,...",
                    help="stage-1 probe rates; 'none' disables probing")
    tr.add_argument("--stage-sizes", type=_sizes, default=(224, 276, 328, 380))
    tr.add_argument("--augment", action="store_true",
                    help="enable train-time image augmentation")
    _add_arch(tr)
    _add_common(tr)

    ev = table["eval"] = subs.add_parser(
        "eval", help="score a checkpoint on a validation split")
    ev.add_argument("--model", required=True, metavar="CKPT")
    _add_data_source(ev)
    ev.add_argument("--vos", default=None,
                    help="expected view orientations (config cross-check)")
    ev.add_argument("--split", choices=("val", "train"), default="val")
    ev.add_argument("--batch-size", type=int, default=16)
    ev.add_argument("--out", metavar="FILE", help="write the full report here")
    ev.add_argument("--heatmap", metavar="PNG", help="write a confusion heat map")
    _add_common(ev)

    vs = table["vo-search"] = subs.add_parser(
        "vo-search", help="run the pyramid search for the best VO triple")
    vs.add_argument("--dataset", required=True, choices=DATASET_IDS)
    _add_data_source(vs)
    vs.add_argument("--out", required=True, metavar="DIR")
    vs.add_argument("--top-singles", type=int, default=3)
    vs.add_argument("--top-pairs", default="3",
                    help="pairs that advance to triples; a count or 'all'")
    vs.add_argument("--epochs", type=int, default=4, help="epochs per candidate training")
    vs.add_argument("--size", type=int, default=96, help="single training stage size")
    vs.add_argument("--batch-size", type=int, default=16)
    vs.add_argument("--lr", type=float, default=1e-3)
    vs.add_argument("--encoder-widths", type=_sizes, default=None)
    vs.add_argument("--tuner-widths", type=_sizes, default=None)
    vs.add_argument("--head-hidden", type=int, default=512)
    vs.add_argument("--tuner-head-hidden", type=int, default=128)
    vs.add_argument("--pseudo-px", type=int, default=64)
    vs.add_argument("--workers", type=int, default=1,
                    help="concurrent candidate trainings")
    _add_common(vs)

    sv = table["serve"] = subs.add_parser(
        "serve", help="run the real-time WebSocket gesture service")
    sv.add_argument("--model", required=True, metavar="CKPT")
    sv.add_argument("--vos", default=None, help="expected view orientations")
    sv.add_argument("--bind", default="127.0.0.1:8765", metavar="ADDR:PORT")
    sv.add_argument("--max-sessions", type=int, default=64)
    sv.add_argument("--buffer-frames", type=int, default=1024)
    sv.add_argument("--auto-stop-ms", type=float, default=0,
                    help="idle auto-stop while recording; 0 disables")
    sv.add_argument("--ui", metavar="DIR", help="serve this static UI directory")
    _add_common(sv)

    rp = table["replay"] = subs.add_parser(
        "replay", help="stream a recorded gesture file to a running server")
    rp.add_argument("--file", required=True, metavar="JSON")
    rp.add_argument("--uri", default="ws://127.0.0.1:8765")
    rp.add_argument("--fps", type=float, default=15.0,
                    help="frame pacing (0 sends as fast as possible)")
    rp.add_argument("--timeout", type=float, default=60.0)
    _add_common(rp)

    return parser, table


# -- dataset plumbing ---------------------------------------------------------

def _resolve_vos(dataset_id: str, vos) -> tuple:
    names = tuple(vo.name for vo in vo_table(dataset_id))
    if vos in (None, "all", ("all",)):
        return names
    chosen = _names(vos) if isinstance(vos, str) else tuple(vos)
    for name in chosen:
        find_orientation(dataset_id, name)
    return chosen


def _load_manifest(ns):
    if not ns.root:
        raise UsageError(f"gestigo {ns.cmd}: --root is required here")
    manifest = parse_dataset(ns.dataset, ns.root)
    if ns.subset:
        manifest = subset_manifest(manifest, _SUBSETS[ns.subset])
    return manifest


def _encoded_data(ns, dataset_id, vo_names, stage_sizes):
    """EncodedDataset from --images (pre-encoded) or --root (renders now)."""
    if bool(ns.root) == bool(ns.images):
        raise UsageError(f"gestigo {ns.cmd}: give exactly one of --root or --images")
    if ns.images:
        if ns.subset:
            raise UsageError(f"gestigo {ns.cmd}: --subset applies when encoding; "
                             "this image directory is already fixed")
        return load_encoded_dataset(ns.images, dataset_id, vo_names, stage_sizes)
    manifest = _load_manifest(ns)
    cfg = RenderConfig(image_px=ns.master_px)
    return encode_for_training(manifest, vo_names, stage_sizes, render_cfg=cfg)


def _class_naming(ns, dataset_id, data=None):
    if ns.subset:
        names = _SUBSETS[ns.subset]
    elif getattr(ns, "images", None) and data is not None:
        # pre-encoded trees may hold a class subset; trust their labels
        count = int(data.labels.max()) + 1
        full = dataset_class_names(dataset_id)
        names = full if count == len(full) else \
            tuple(f"class {i + 1}" for i in range(count))
        return count, names
    else:
        names = dataset_class_names(dataset_id)
    return len(names), names


# -- subcommands --------------------------------------------------------------

def cmd_encode(ns) -> int:
    manifest = _load_manifest(ns)
    vo_names = _resolve_vos(ns.dataset, ns.vos)
    workers = ns.workers if ns.workers else worker_count()
    written = encode_dataset_images(
        manifest, vo_names, ns.out, render_cfg=RenderConfig(image_px=ns.master_px),
        workers=workers)
    print(f"encoded {written} images ({len(manifest.entries)} gestures x "
          f"{len(vo_names)} views) under {Path(ns.out) / ns.dataset}")
    return EXIT_OK


def _model_config(ns, dataset_id, vo_names, stage_sizes, data=None) -> ModelConfig:
    count, names = _class_naming(ns, dataset_id, data)
    kw = {}
    if ns.encoder_widths:
        kw["encoder_widths"] = ns.encoder_widths
    if ns.tuner_widths:
        kw["tuner_widths"] = ns.tuner_widths
    return ModelConfig(
        dataset_id=dataset_id, class_count=count, vo_names=vo_names,
        class_names=names, head_hidden=ns.head_hidden,
        tuner_head_hidden=ns.tuner_head_hidden, stage_sizes=stage_sizes,
        pseudo_px=ns.pseudo_px, seed=ns.seed, **kw)


def cmd_train(ns) -> int:
    vo_names = _resolve_vos(ns.dataset, ns.vos)
    if ns.streams is not None:
        if not 1 <= ns.streams <= len(vo_names):
            raise UsageError(f"gestigo train: --streams must be 1..{len(vo_names)}")
        vo_names = vo_names[:ns.streams]
    data = _encoded_data(ns, ns.dataset, vo_names, ns.stage_sizes)
    config = _model_config(ns, ns.dataset, vo_names, ns.stage_sizes, data)
    net = GestureNet(config)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)

    lines = [f"gestigo train  dataset {ns.dataset}  seed {ns.seed}",
             f"views {','.join(vo_names)}  stages {','.join(map(str, ns.stage_sizes))}",
             f"samples {len(data.train_idx)} train / {len(data.val_idx)} val  "
             f"classes {config.class_count}  parameters {net.param_count}"]
    for line in lines:
        print(line, flush=True)

    def log(msg):
        lines.append(msg)
        print(msg, flush=True)

    settings = TrainSettings(
        epochs_per_stage=ns.epochs, batch_size=ns.batch_size, base_lr=ns.lr,
        lr_grid=ns.lr_grid, seed=ns.seed, augment=ns.augment, log=log)
    ckpt = out / "model.ckpt"
    try:
        report = train(net, data, settings, checkpoint_path=ckpt,
                       summary_path=out / "summary.tsv")
    finally:
        (out / "train.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"best val {report.best_val_accuracy:.4f}  "
          f"wall {report.wall_seconds:.0f}s  checkpoint {ckpt}")
    return EXIT_OK


def cmd_eval(ns) -> int:
    net = GestureNet.load(ns.model)
    config = net.config
    if ns.vos is not None and _names(ns.vos) != config.vo_names:
        raise ConfigError(f"--vos {ns.vos} does not match the checkpoint's "
                          f"view order {','.join(config.vo_names)}")
    ns.dataset = config.dataset_id     # _load_manifest reads it; eval has no flag
    size = config.stage_sizes[-1]
    if ns.root and not ns.subset and config.class_count != len(
            dataset_class_names(config.dataset_id)):
        # model was trained on a class subset; mirror it when parsing raw data
        matching = [k for k, v in _SUBSETS.items() if v == config.class_names]
        ns.subset = matching[0] if matching else ns.subset
    data = _encoded_data(ns, config.dataset_id, config.vo_names, (size,))
    idx = data.val_idx if ns.split == "val" else data.train_idx
    report = evaluate(net, data, size=size, batch_size=ns.batch_size, indices=idx)
    print(f"accuracy {report.accuracy:.4f} on {report.sample_count} "
          f"{ns.split} gestures ({config.dataset_id}, "
          f"views {','.join(config.vo_names)}, seed {ns.seed})")
    if ns.out:
        write_report(report, ns.out)
        print(f"report {ns.out}")
    if ns.heatmap:
        confusion_heatmap(report, ns.heatmap)
        print(f"heatmap {ns.heatmap}")
    return EXIT_OK


def cmd_vo_search(ns) -> int:
    candidates = tuple(vo.name for vo in vo_table(ns.dataset))
    data = _encoded_data(ns, ns.dataset, candidates, (ns.size,))
    count, names = _class_naming(ns, ns.dataset, data)
    top_pairs = None if str(ns.top_pairs).lower() == "all" else int(ns.top_pairs)
    settings = TrainSettings(epochs_per_stage=ns.epochs, batch_size=ns.batch_size,
                             base_lr=ns.lr, lr_grid=(), seed=ns.seed)

    def trainer(vo_names):
        kw = {}
        if ns.encoder_widths:
            kw["encoder_widths"] = ns.encoder_widths
        if ns.tuner_widths:
            kw["tuner_widths"] = ns.tuner_widths
        config = ModelConfig(
            dataset_id=ns.dataset, class_count=count, vo_names=vo_names,
            class_names=names, head_hidden=ns.head_hidden,
            tuner_head_hidden=ns.tuner_head_hidden, stage_sizes=(ns.size,),
            pseudo_px=ns.pseudo_px, seed=ns.seed, **kw)
        report = train(GestureNet(config), data.streams(vo_names), settings)
        acc = report.best_val_accuracy
        print(f"{','.join(vo_names)}\t{acc:.4f}", flush=True)
        return acc

    triple, state = vo_search(ns.dataset, trainer, candidates,
                              top_k_singles=ns.top_singles, top_k_pairs=top_pairs,
                              workers=ns.workers)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    write_search_report(triple, state, out / "search.tsv")
    print(f"chosen {','.join(triple)} after {state.budget} trainings "
          f"(seed {ns.seed}); report {out / 'search.tsv'}")
    return EXIT_OK


def cmd_serve(ns) -> int:
    net = GestureNet.load(ns.model)
    if ns.vos is not None and _names(ns.vos) != net.config.vo_names:
        raise ConfigError(f"--vos {ns.vos} does not match the checkpoint's "
                          f"view order {','.join(net.config.vo_names)}")
    parse_bind(ns.bind)
    service = GestureService(
        model=net, buffer_frames=ns.buffer_frames,
        auto_stop_ms=ns.auto_stop_ms or None, max_sessions=ns.max_sessions,
        workers=worker_count(), ui_dir=ns.ui,
        log=lambda line: print(line, file=sys.stderr, flush=True))
    print(f"serving {net.config.dataset_id} "
          f"({','.join(net.config.vo_names)}) on ws://{ns.bind}", file=sys.stderr)
    run_server(service, ns.bind)
    return EXIT_OK


def cmd_replay(ns) -> int:
    msg = replay_client(ns.file, ns.uri, fps=ns.fps, timeout=ns.timeout)
    print(json.dumps(msg))
    return EXIT_OK


_DISPATCH = {
    "encode": cmd_encode,
    "train": cmd_train,
    "eval": cmd_eval,
    "vo-search": cmd_vo_search,
    "serve": cmd_serve,
    "replay": cmd_replay,
}


# -- entry points -------------------------------------------------------------

def run(argv) -> int:
    argv = list(argv)
    parser, table = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.cmd is None:
            parser.print_help()
            return EXIT_USAGE
        if getattr(ns, "config", None):
            extra = _config_argv(table[ns.cmd], _read_config(ns.config))
            at = argv.index(ns.cmd) + 1
            ns = parser.parse_args(argv[:at] + extra + argv[at:])
    except UsageError as exc:
        print(f"gestigo: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:       # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    try:
        return _DISPATCH[ns.cmd](ns)
    except UsageError as exc:
        print(f"gestigo: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, GraphError) as exc:
        print(f"gestigo {ns.cmd}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GestigoError as exc:
        print(f"gestigo {ns.cmd}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_OK


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
