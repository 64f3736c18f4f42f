"""Training pipeline: dataset encoding, augmentation, staged fit loop.

Gestures are rendered once at master resolution (960px) and downscaled
by area averaging to each training stage size; the stage arrays are what
the loop consumes. One optimizer lifetime per stage with a fresh cosine
learning-rate cycle, batch size 16, and the j+1 cross-entropy losses
combined through the learnable homoscedastic weights.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .condense import RenderConfig, condense_views, find_orientation
from .datasets import DatasetManifest, load_sequence, write_manifest, read_manifest
from .errors import ArgumentError, ConfigError, NotFoundError, NumericError
from .model import GestureNet, homoscedastic_loss, image_batch, resize_image
from .nn import Adam, cosine_lr, cross_entropy, expand_cells
from .raster import read_png, write_png

MASTER_PX = 960
DEFAULT_LR_GRID = (3e-3, 1e-3, 3e-4)


# -- encoded dataset ----------------------------------------------------------

@dataclass
class EncodedDataset:
    """Stage-ready image arrays for every gesture of a dataset split.

    ``stages`` maps size -> list of per-stream (n, size, size, 3) uint8
    arrays; keep only the sizes you actually train on, a full 4-stage
    pyramid of a large dataset will not fit in memory.
    """

    dataset_id: str
    vo_names: tuple
    labels: np.ndarray          # (n,) int64, 0-based
    train_idx: np.ndarray
    val_idx: np.ndarray
    stages: dict

    @property
    def sizes(self):
        return tuple(sorted(self.stages))

    @property
    def sample_count(self) -> int:
        return int(self.labels.shape[0])

    def stage(self, size: int):
        if size not in self.stages:
            raise ArgumentError(f"no encoded arrays at {size}px (have {self.sizes})")
        return self.stages[size]

    def streams(self, vo_names) -> "EncodedDataset":
        """A view of this dataset restricted to the named streams, in order.

        Shares the underlying arrays, so it is cheap; used by the VO
        search to train sub-sequences from one encoding pass.
        """
        vo_names = tuple(vo_names)
        try:
            picks = [self.vo_names.index(name) for name in vo_names]
        except ValueError:
            raise ArgumentError(f"streams {vo_names} not all present "
                                f"in {self.vo_names}") from None
        stages = {size: [arrays[k] for k in picks]
                  for size, arrays in self.stages.items()}
        return EncodedDataset(dataset_id=self.dataset_id, vo_names=vo_names,
                              labels=self.labels, train_idx=self.train_idx,
                              val_idx=self.val_idx, stages=stages)


def _split_indices(manifest: DatasetManifest):
    train, val = [], []
    for i, e in enumerate(manifest.entries):
        (train if e.split == "train" else val).append(i)
    return np.array(train, dtype=np.int64), np.array(val, dtype=np.int64)


def encode_for_training(manifest: DatasetManifest, vo_names, stage_sizes,
                        render_cfg: RenderConfig = None, progress=None) -> EncodedDataset:
    """Render every sequence at master resolution and bin down per stage."""
    vo_names = tuple(vo_names)
    stage_sizes = tuple(dict.fromkeys(int(s) for s in stage_sizes))
    vos = [find_orientation(manifest.dataset_id, name) for name in vo_names]
    cfg = render_cfg if render_cfg is not None else RenderConfig(image_px=MASTER_PX)
    n = len(manifest.entries)
    stages = {size: [np.empty((n, size, size, 3), dtype=np.uint8) for _ in vo_names]
              for size in stage_sizes}
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        seq = load_sequence(manifest, i)
        labels[i] = seq.label - 1
        for k, image in enumerate(condense_views(seq, vos, cfg)):
            for size in stage_sizes:
                stages[size][k][i] = resize_image(image, size)
        if progress is not None:
            progress(i + 1, n)
    train_idx, val_idx = _split_indices(manifest)
    return EncodedDataset(dataset_id=manifest.dataset_id, vo_names=vo_names,
                          labels=labels, train_idx=train_idx, val_idx=val_idx,
                          stages=stages)


def _locator_slug(locator: str) -> str:
    slug = locator.replace("/", "-")
    if slug.endswith(".txt"):
        slug = slug[:-4]
    return slug


def encode_dataset_images(manifest: DatasetManifest, vo_names, out_root,
                          render_cfg: RenderConfig = None, progress=None,
                          workers: int = 1) -> int:
    """Write master condensed images to disk, one PNG per gesture per VO.

    Layout: <out>/<dataset>/<vo>/<split>/<class NN>/<locator-slug>.png with
    the manifest alongside at <out>/<dataset>/manifest.tsv. Returns the
    number of images written. Gestures are independent, so ``workers``
    threads can render them concurrently.
    """
    vo_names = tuple(vo_names)
    vos = [find_orientation(manifest.dataset_id, name) for name in vo_names]
    cfg = render_cfg if render_cfg is not None else RenderConfig(image_px=MASTER_PX)
    base = Path(out_root) / manifest.dataset_id
    base.mkdir(parents=True, exist_ok=True)
    write_manifest(manifest, base / "manifest.tsv")
    n = len(manifest.entries)

    def encode_one(i: int) -> int:
        entry = manifest.entries[i]
        seq = load_sequence(manifest, i)
        for name, image in zip(vo_names, condense_views(seq, vos, cfg)):
            d = base / name / entry.split / f"{entry.label:02d}"
            d.mkdir(parents=True, exist_ok=True)
            write_png(image, d / f"{_locator_slug(entry.locator)}.png")
        return len(vo_names)

    written = 0
    if workers <= 1:
        for i in range(n):
            written += encode_one(i)
            if progress is not None:
                progress(i + 1, n)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for done, count in enumerate(pool.map(encode_one, range(n)), start=1):
                written += count
                if progress is not None:
                    progress(done, n)
    return written


def load_encoded_dataset(out_root, dataset_id: str, vo_names, stage_sizes,
                         progress=None) -> EncodedDataset:
    """Rebuild stage arrays from a directory written by encode_dataset_images."""
    vo_names = tuple(vo_names)
    stage_sizes = tuple(dict.fromkeys(int(s) for s in stage_sizes))
    base = Path(out_root) / dataset_id
    manifest_path = base / "manifest.tsv"
    if not manifest_path.exists():
        raise NotFoundError(f"no encoded manifest at {manifest_path}")
    manifest = read_manifest(manifest_path)
    n = len(manifest.entries)
    stages = {size: [np.empty((n, size, size, 3), dtype=np.uint8) for _ in vo_names]
              for size in stage_sizes}
    labels = np.empty(n, dtype=np.int64)
    for i, entry in enumerate(manifest.entries):
        labels[i] = entry.label - 1
        for k, name in enumerate(vo_names):
            path = base / name / entry.split / f"{entry.label:02d}" / \
                f"{_locator_slug(entry.locator)}.png"
            if not path.exists():
                raise NotFoundError(f"missing encoded image {path}")
            image = read_png(path)
            for size in stage_sizes:
                stages[size][k][i] = resize_image(image, size)
        if progress is not None:
            progress(i + 1, n)
    train_idx, val_idx = _split_indices(manifest)
    return EncodedDataset(dataset_id=manifest.dataset_id, vo_names=vo_names,
                          labels=labels, train_idx=train_idx, val_idx=val_idx,
                          stages=stages)


# -- augmentation -------------------------------------------------------------

_BORDER = (16, 16, 16)


def flip_image(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, ::-1])


def rotate_image(image: np.ndarray, degrees: float) -> np.ndarray:
    h, w = image.shape[:2]
    m = cv2.getRotationMatrix2D((w / 2 - 0.5, h / 2 - 0.5), degrees, 1.0)
    return cv2.warpAffine(image, m, (w, h), flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_CONSTANT, borderValue=_BORDER)


def affine_image(image: np.ndarray, tx: float, ty: float, sx: float, sy: float) -> np.ndarray:
    """Scale about the centre then translate; t in canvas fractions."""
    h, w = image.shape[:2]
    cx, cy = w / 2 - 0.5, h / 2 - 0.5
    m = np.array([[sx, 0.0, cx - sx * cx + tx * w],
                  [0.0, sy, cy - sy * cy + ty * h]])
    return cv2.warpAffine(image, m, (w, h), flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_CONSTANT, borderValue=_BORDER)


def perspective_image(image: np.ndarray, corner_offsets: np.ndarray) -> np.ndarray:
    """Warp by moving the four corners by (4, 2) canvas-fraction offsets."""
    h, w = image.shape[:2]
    src = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float32)
    dst = src + np.asarray(corner_offsets, dtype=np.float32) * np.array([w, h], dtype=np.float32)
    m = cv2.getPerspectiveTransform(src, dst)
    return cv2.warpPerspective(image, m, (w, h), flags=cv2.INTER_LINEAR,
                               borderMode=cv2.BORDER_CONSTANT, borderValue=_BORDER)


def color_jitter(image: np.ndarray, brightness: float, contrast: float) -> np.ndarray:
    out = (image.astype(np.float64) - 128.0) * contrast + 128.0
    out *= brightness
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def augment(image: np.ndarray, seed) -> np.ndarray:
    """Random train-time image transforms, deterministic for a given seed.

    Gated draws in fixed order: horizontal flip p=0.5, affine p=0.3
    (translate/scale +-10%, the scale doubling as a random zoom),
    perspective p=0.2 (corner distortion 0.1), rotation p=0.3 (+-15 deg),
    color jitter p=0.3 (brightness/contrast +-10%). When no gate fires
    the input comes back unchanged.
    """
    rng = np.random.default_rng(seed)
    out = image
    if rng.random() < 0.5:
        out = flip_image(out)
    if rng.random() < 0.3:
        tx, ty = rng.uniform(-0.1, 0.1, 2)
        sx, sy = rng.uniform(0.9, 1.1, 2)
        out = affine_image(out, float(tx), float(ty), float(sx), float(sy))
    if rng.random() < 0.2:
        out = perspective_image(out, rng.uniform(-0.1, 0.1, (4, 2)))
    if rng.random() < 0.3:
        out = rotate_image(out, float(rng.uniform(-15.0, 15.0)))
    if rng.random() < 0.3:
        out = color_jitter(out, float(rng.uniform(0.9, 1.1)), float(rng.uniform(0.9, 1.1)))
    return out


# -- training loop ------------------------------------------------------------

@dataclass
class TrainSettings:
    epochs_per_stage: int = 8
    batch_size: int = 16
    base_lr: float = 1e-3
    lr_grid: tuple = DEFAULT_LR_GRID    # () disables probing, uses base_lr
    probe_epochs: int = 1
    seed: int = 17
    augment: bool = False               # direction-sensitive labels: see README
    log: object = None                  # callable receiving formatted lines


@dataclass(frozen=True)
class EpochRecord:
    stage: int                  # 1-based stage number
    size: int
    epoch: int                  # 1-based within stage
    lr: float                   # stage base rate (cosine-annealed per step)
    losses: tuple               # mean L_1..L_{j+1} over the epoch's batches
    s: tuple                    # loss weights after the epoch
    accuracies: tuple           # per-stream then tuner validation accuracy

    @property
    def val_accuracy(self) -> float:
        return self.accuracies[-1]


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    best_val_accuracy: float = 0.0
    best_record: EpochRecord = None
    chosen_lr: float = None
    wall_seconds: float = 0.0


def _epoch_means(sums, count):
    return tuple(v / max(count, 1) for v in sums)


def _batched(indices, batch_size):
    for lo in range(0, len(indices), batch_size):
        yield indices[lo:lo + batch_size]


def validation_pass(net: GestureNet, data: EncodedDataset, size: int,
                    batch_size: int = 16, indices=None):
    """Per-head accuracy over a split in eval mode; tuner entry last."""
    arrays = data.stage(size)
    idx = data.val_idx if indices is None else np.asarray(indices)
    if len(idx) == 0:
        raise ArgumentError("validation split is empty")
    j = len(arrays)
    hits = np.zeros(j + 1, dtype=np.int64)
    for chunk in _batched(idx, batch_size):
        labels = data.labels[chunk]
        xs = [image_batch(arrays[k][chunk], net.dtype) for k in range(j)]
        probs, _ = net.forward_multistream(xs, mode="eval")
        for k in range(j):
            hits[k] += int(np.sum(np.argmax(probs[k].data, axis=1) == labels))
        pseudo = expand_cells(probs, net.config.pseudo_px)
        tuner = net.forward_tuner(pseudo, mode="eval")
        hits[j] += int(np.sum(np.argmax(tuner.data, axis=1) == labels))
    return tuple(float(h) / len(idx) for h in hits)


def _train_batch(net, opt, xs, labels0, lr_now):
    probs, logits = net.forward_multistream(xs, mode="train")
    losses = [cross_entropy(lg, labels0) for lg in logits]
    pseudo = expand_cells(probs, net.config.pseudo_px)
    tuner_logits = net.forward_tuner(pseudo, mode="train")
    losses.append(cross_entropy(tuner_logits, labels0))
    total = homoscedastic_loss(losses, net.s)
    opt.zero_grad()
    total.backward()
    opt.step(lr=lr_now)
    return [float(l.item()) for l in losses]


def _gather_batch(net, arrays, chunk, do_augment, seed_parts):
    xs = []
    for k, arr in enumerate(arrays):
        batch = arr[chunk]
        if do_augment:
            batch = np.stack([
                augment(batch[b], np.random.SeedSequence(
                    entropy=seed_parts, spawn_key=(int(chunk[b]), k)).generate_state(1)[0])
                for b in range(batch.shape[0])])
        xs.append(image_batch(batch, net.dtype))
    return xs


def _run_epoch(net, opt, data, size, stage_i, epoch, settings, stage_lr, step0, steps_total):
    arrays = data.stage(size)
    order = np.random.default_rng([settings.seed, stage_i, epoch]).permutation(data.train_idx)
    sums = np.zeros(len(arrays) + 1)
    batches = 0
    step = step0
    for chunk in _batched(order, settings.batch_size):
        lr_now = cosine_lr(stage_lr, min(step, steps_total), steps_total)
        xs = _gather_batch(net, arrays, chunk, settings.augment,
                           (settings.seed, stage_i, epoch))
        losses = _train_batch(net, opt, xs, data.labels[chunk], lr_now)
        sums += losses
        batches += 1
        step += 1
    return _epoch_means(sums, batches), step


def _probe_lr(net, data, settings, size, stage_i, log):
    """Short fit per candidate rate from identical weights; best tuner accuracy wins."""
    init_state = net.clone_state()
    best_lr, best_acc = settings.lr_grid[0], -1.0
    for lr in settings.lr_grid:
        net.load_state_arrays(init_state)
        opt = Adam(net.parameters(), lr=lr)
        steps_total = settings.probe_epochs * max(
            1, math.ceil(len(data.train_idx) / settings.batch_size))
        step = 0
        for epoch in range(settings.probe_epochs):
            _, step = _run_epoch(net, opt, data, size, 1000 + stage_i, epoch,
                                 settings, lr, step, steps_total)
        acc = validation_pass(net, data, size, settings.batch_size)[-1]
        log(f"probe lr {lr:g}: val {acc:.4f}")
        if acc > best_acc:
            best_lr, best_acc = lr, acc
    net.load_state_arrays(init_state)
    return best_lr


def train(net: GestureNet, data: EncodedDataset, settings: TrainSettings = None,
          checkpoint_path=None, log_path=None, summary_path=None) -> TrainReport:
    """Staged training with per-epoch validation and best-accuracy checkpoints.

    The checkpoint at ``checkpoint_path`` always holds the weights of the
    best tuner validation accuracy so far, including when a numeric error
    aborts a later epoch (the exception still propagates).
    """
    settings = settings if settings is not None else TrainSettings()
    if tuple(data.vo_names) != net.config.vo_names:
        raise ConfigError(f"encoded streams {data.vo_names} do not match "
                          f"model views {net.config.vo_names}")
    if len(data.train_idx) == 0 or len(data.val_idx) == 0:
        raise ArgumentError("both train and val splits must be non-empty")
    if data.labels.max() >= net.config.class_count or data.labels.min() < 0:
        raise ArgumentError("dataset labels exceed the model's class count")
    for size in net.config.stage_sizes:
        data.stage(size)

    lines = []

    def log(msg):
        lines.append(msg)
        if settings.log is not None:
            settings.log(msg)

    report = TrainReport()
    best_state = None
    t0 = time.monotonic()
    stage_lr = settings.base_lr
    try:
        for stage_i, size in enumerate(net.config.stage_sizes):
            if stage_i == 0 and settings.lr_grid:
                stage_lr = _probe_lr(net, data, settings, size, stage_i, log)
                log(f"stage 1 rate selection: {stage_lr:g}")
            report.chosen_lr = stage_lr
            opt = Adam(net.parameters(), lr=stage_lr)
            steps_total = settings.epochs_per_stage * max(
                1, math.ceil(len(data.train_idx) / settings.batch_size))
            step = 0
            for epoch in range(settings.epochs_per_stage):
                means, step = _run_epoch(net, opt, data, size, stage_i, epoch,
                                         settings, stage_lr, step, steps_total)
                accs = validation_pass(net, data, size, settings.batch_size)
                rec = EpochRecord(stage=stage_i + 1, size=size, epoch=epoch + 1,
                                  lr=stage_lr, losses=means,
                                  s=tuple(float(v) for v in net.s.data),
                                  accuracies=accs)
                report.records.append(rec)
                log(_format_record(rec, settings.epochs_per_stage))
                if rec.val_accuracy > report.best_val_accuracy or report.best_record is None:
                    report.best_val_accuracy = rec.val_accuracy
                    report.best_record = rec
                    best_state = net.clone_state()
                    if checkpoint_path is not None:
                        _save_state(net, best_state, checkpoint_path)
    except NumericError:
        if best_state is not None and checkpoint_path is not None:
            _save_state(net, best_state, checkpoint_path)
        raise
    finally:
        report.wall_seconds = time.monotonic() - t0
        if log_path is not None:
            Path(log_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        if summary_path is not None:
            write_summary(report, summary_path)
    return report


def _save_state(net: GestureNet, state, path) -> None:
    current = net.clone_state()
    net.load_state_arrays(state)
    try:
        net.save(path)
    finally:
        net.load_state_arrays(current)


def _format_record(rec: EpochRecord, epochs: int) -> str:
    losses = "/".join(f"{v:.4f}" for v in rec.losses)
    s_vals = "/".join(f"{v:+.3f}" for v in rec.s)
    accs = " ".join(f"{v:.3f}" for v in rec.accuracies[:-1])
    return (f"stage {rec.stage} size {rec.size} epoch {rec.epoch}/{epochs} "
            f"lr {rec.lr:g} losses {losses} s {s_vals} "
            f"stream val {accs} tuner val {rec.val_accuracy:.4f}")


def write_summary(report: TrainReport, path) -> None:
    """One tab-separated record per epoch: stage, size, lr, losses, s, val acc."""
    if not report.records:
        Path(path).write_text("", encoding="utf-8")
        return
    j1 = len(report.records[0].losses)
    head = ["stage", "size", "epoch", "lr"]
    head += [f"L{k + 1}" for k in range(j1)]
    head += [f"s{k + 1}" for k in range(j1)]
    head += [f"val{k + 1}" for k in range(j1 - 1)] + ["val_tuner"]
    rows = ["\t".join(head)]
    for r in report.records:
        row = [str(r.stage), str(r.size), str(r.epoch), f"{r.lr:g}"]
        row += [f"{v:.6f}" for v in r.losses]
        row += [f"{v:.6f}" for v in r.s]
        row += [f"{v:.6f}" for v in r.accuracies]
        rows.append("\t".join(row))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
