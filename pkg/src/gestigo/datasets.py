"""Skeleton gesture dataset parsing.

Turns on-disk dataset trees into canonical :class:`DatasetManifest` /
:class:`SkeletonSequence` records. Sequences are stored as plain text, one
frame per line, whitespace-separated ``x y z`` triples per joint; the
per-dataset directory layouts are documented in ``docs/datasets.md``.

Coordinates are kept in native dataset units; all normalization happens in
:mod:`gestigo.condense`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, NotFoundError, ParseError, SchemaError

RGB = tuple[int, int, int]

DATASET_IDS = (
    "SHREC2017_14G",
    "SHREC2017_28G",
    "DHG1428_14G",
    "DHG1428_28G",
    "LMDHG",
    "FPHA",
)

DEFAULT_SEED = 17

# Finger palette, thumb to pinky. The second hand of the two-hand schema
# uses the same hues at half saturation.
FINGER_COLORS: tuple[RGB, ...] = (
    (255, 0, 0),
    (0, 255, 0),
    (0, 0, 255),
    (255, 255, 0),
    (255, 0, 255),
)
FINGER_COLORS_DESATURATED: tuple[RGB, ...] = (
    (255, 128, 128),
    (128, 255, 128),
    (128, 128, 255),
    (255, 255, 128),
    (255, 128, 255),
)
BONE_COLOR: RGB = (230, 230, 230)


@dataclass(frozen=True)
class JointSchema:
    """Joint layout of one dataset: connectivity, fingertip trails, palette."""

    name: str
    joint_count: int
    bones: tuple[tuple[int, int], ...]
    fingertip_indices: tuple[int, ...]
    finger_colors: tuple[RGB, ...]
    bone_color: RGB = BONE_COLOR

    def __post_init__(self):
        for a, b in self.bones:
            if not (0 <= a < self.joint_count and 0 <= b < self.joint_count):
                raise SchemaError(f"bone ({a},{b}) out of range for {self.joint_count} joints")
        tips = self.fingertip_indices
        if len(set(tips)) != len(tips) or any(not 0 <= t < self.joint_count for t in tips):
            raise SchemaError("fingertip indices must be distinct and in range")
        if len(tips) % 5 != 0:
            raise SchemaError("expected 5 fingertips per hand")
        if len(self.finger_colors) != len(tips):
            raise SchemaError("one palette color per fingertip required")


def _chain(*idx):
    return tuple(zip(idx[:-1], idx[1:]))


def _hand21_bones():
    bones = []
    for base in (1, 5, 9, 13, 17):
        bones.append((0, base))
        bones.extend(_chain(base, base + 1, base + 2, base + 3))
    bones.extend([(5, 9), (9, 13), (13, 17)])
    return tuple(bones)


def _hand22_bones():
    bones = [(0, 1)]
    for base in (2, 6, 10, 14, 18):
        bones.append((1, base))
        bones.extend(_chain(base, base + 1, base + 2, base + 3))
    return tuple(bones)


def _hand46_bones():
    one = [(0, 1), (1, 2)]
    for base in (3, 7, 11, 15, 19):
        one.append((2, base))
        one.extend(_chain(base, base + 1, base + 2, base + 3))
    return tuple(one) + tuple((a + 23, b + 23) for a, b in one)


#: 21 joints, MediaPipe-style ordering (wrist, then 4 joints per finger).
#: Shared by FPHA and the live landmark stream.
HAND21 = JointSchema(
    name="hand21",
    joint_count=21,
    bones=_hand21_bones(),
    fingertip_indices=(4, 8, 12, 16, 20),
    finger_colors=FINGER_COLORS,
)

#: 22 joints, DHG/SHREC ordering (wrist, palm, then 4 joints per finger).
HAND22 = JointSchema(
    name="hand22",
    joint_count=22,
    bones=_hand22_bones(),
    fingertip_indices=(5, 9, 13, 17, 21),
    finger_colors=FINGER_COLORS,
)

#: 46 joints, two-hand LMDHG ordering (forearm, wrist, palm, 4 per finger; x2).
HAND46 = JointSchema(
    name="hand46",
    joint_count=46,
    bones=_hand46_bones(),
    fingertip_indices=(6, 10, 14, 18, 22, 29, 33, 37, 41, 45),
    finger_colors=FINGER_COLORS + FINGER_COLORS_DESATURATED,
)

SCHEMAS_BY_JOINT_COUNT = {21: HAND21, 22: HAND22, 46: HAND46}


@dataclass(frozen=True)
class SkeletonSequence:
    """One dynamic gesture: frames of 3D joint coordinates plus metadata."""

    frames: np.ndarray  # (T, J, 3) float64, read-only
    schema: JointSchema
    label: int | None = None
    subject: str | None = None
    source_path: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise SchemaError(f"frames must be (T, J, 3), got {frames.shape}")
        if frames.shape[1] != self.schema.joint_count:
            raise SchemaError(
                f"expected {self.schema.joint_count} joints per frame, got {frames.shape[1]}"
            )
        if frames.shape[0] < 2:
            raise SchemaError(f"a gesture needs at least 2 frames, got {frames.shape[0]}")
        if not np.isfinite(frames).all():
            raise SchemaError("non-finite joint coordinates")
        if self.label is not None and self.label < 1:
            raise SchemaError(f"label must be >= 1, got {self.label}")
        frames = frames.copy()
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    @property
    def frame_count(self):
        return self.frames.shape[0]


@dataclass(frozen=True)
class ManifestEntry:
    locator: str
    label: int
    subject: str
    split: str  # "train" or "val"


@dataclass(frozen=True)
class DatasetManifest:
    """Complete inventory of one dataset tree with labels and split tags."""

    dataset_id: str
    class_count: int
    seed: int
    entries: tuple[ManifestEntry, ...]
    schema: JointSchema = field(compare=False)
    root: Path | None = field(compare=False, default=None)

    def __post_init__(self):
        if self.dataset_id not in DATASET_IDS:
            raise ArgumentError(f"unknown dataset id {self.dataset_id!r}")
        for e in self.entries:
            if not 1 <= e.label <= self.class_count:
                raise SchemaError(
                    f"label {e.label} outside [1,{self.class_count}] for {e.locator}"
                )
            if e.split not in ("train", "val"):
                raise SchemaError(f"bad split tag {e.split!r} for {e.locator}")
        tags = {e.split for e in self.entries}
        if self.entries and tags != {"train", "val"}:
            raise SchemaError("both splits must be non-empty")

    def __len__(self):
        return len(self.entries)


# ---------------------------------------------------------------------------
# class inventories

DHG14_CLASSES = (
    "Grab", "Tap", "Expand", "Pinch", "Rotation CW", "Rotation CCW",
    "Swipe Right", "Swipe Left", "Swipe Up", "Swipe Down", "Swipe X",
    "Swipe +", "Swipe V", "Shake",
)
# 28G: classes 1-14 performed with one finger, 15-28 with the whole hand.
DHG28_CLASSES = tuple(f"{n} (finger)" for n in DHG14_CLASSES) + tuple(
    f"{n} (hand)" for n in DHG14_CLASSES
)
SWIPE_CLASSES = (
    "Swipe Up", "Swipe Down", "Swipe Right", "Swipe Left",
    "Swipe +", "Swipe V", "Swipe X",
)
LMDHG_CLASSES = (
    "Point To", "Catch", "Shake Down", "Shake", "Scroll", "Draw C", "Slice",
    "Rotate", "Draw Line", "Shake Two Hands", "Catch Two Hands",
    "Point To Raised", "Zoom",
)
FPHA_CLASSES = (
    "open_juice_bottle", "close_juice_bottle", "pour_juice_bottle",
    "open_peanut_butter", "close_peanut_butter", "prick", "sprinkle",
    "scoop_spoon", "put_salt", "put_sugar", "open_milk", "close_milk",
    "pour_milk", "drink_mug", "put_tea_bag", "open_letter",
    "take_letter_from_enveloppe", "read_letter", "flip_pages",
    "use_calculator", "write", "tear_paper", "squeeze_paper",
    "open_soda_can", "pour_wine", "toast_wine", "clean_glasses",
    "open_wallet", "give_coin", "receive_coin", "give_card",
    "pour_liquid_soap", "wash_sponge", "squeeze_sponge", "scratch_sponge",
    "flip_sponge", "open_liquid_soap", "close_liquid_soap", "use_flash",
    "light_candle", "charge_cell_phone", "unfold_glasses", "handshake",
    "high_five", "fist_bump",
)

_CLASS_NAMES = {
    "DHG1428_14G": DHG14_CLASSES,
    "DHG1428_28G": DHG28_CLASSES,
    "SHREC2017_14G": DHG14_CLASSES,
    "SHREC2017_28G": DHG28_CLASSES,
    "LMDHG": LMDHG_CLASSES,
    "FPHA": FPHA_CLASSES,
}

_SCHEMAS = {
    "DHG1428_14G": HAND22,
    "DHG1428_28G": HAND22,
    "SHREC2017_14G": HAND22,
    "SHREC2017_28G": HAND22,
    "LMDHG": HAND46,
    "FPHA": HAND21,
}

#: Expected (total, train, val) counts under each dataset's evaluation protocol.
PROTOCOL_COUNTS = {
    "DHG1428_14G": (2800, 1960, 840),
    "DHG1428_28G": (2800, 1960, 840),
    "SHREC2017_14G": (2800, 1960, 840),
    "SHREC2017_28G": (2800, 1960, 840),
    "LMDHG": (608, 414, 194),
    "FPHA": (1175, 600, 575),
}

_SKELETON_FILE = {"DHG1428": "skeleton_world.txt", "SHREC2017": "skeletons_world.txt"}


def dataset_family(dataset_id):
    if dataset_id not in DATASET_IDS:
        raise ArgumentError(f"unknown dataset id {dataset_id!r}")
    return dataset_id.split("_")[0]


def dataset_class_names(dataset_id):
    if dataset_id not in _CLASS_NAMES:
        raise ArgumentError(f"unknown dataset id {dataset_id!r}")
    return _CLASS_NAMES[dataset_id]


def dataset_schema(dataset_id):
    if dataset_id not in _SCHEMAS:
        raise ArgumentError(f"unknown dataset id {dataset_id!r}")
    return _SCHEMAS[dataset_id]


def class_count(dataset_id):
    return len(dataset_class_names(dataset_id))


# ---------------------------------------------------------------------------
# parsing

def parse_dataset(dataset_id: str, root) -> DatasetManifest:
    """Index a dataset tree into a manifest with labels and split tags.

    Entry ordering is lexicographic by locator. When official split files
    are present on disk they are honored; otherwise a seeded shuffle
    (seed recorded in the manifest) reproduces the protocol's split ratio.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotFoundError(f"dataset root {root} does not exist")
    family = dataset_family(dataset_id)
    if family in ("DHG1428", "SHREC2017"):
        records = _walk_dhg_like(root, family, fine=dataset_id.endswith("28G"))
        splits = _read_dhg_split_files(root)
    elif family == "LMDHG":
        records = _walk_lmdhg(root)
        splits, subjects = _read_tagged_split_file(root / "split.txt")
        if subjects:
            records = [(loc, lab, subjects.get(loc, "")) for loc, lab, _ in records]
    else:
        records, splits = _walk_fpha(root)
    if not records:
        raise NotFoundError(f"no sequences found under {root} for {dataset_id}")

    n = class_count(dataset_id)
    records.sort(key=lambda r: r[0])
    locators = [r[0] for r in records]
    if splits is not None:
        missing = [loc for loc in locators if loc not in splits]
        if missing:
            raise SchemaError(f"{len(missing)} entries absent from split files, e.g. {missing[0]}")
        tags = [splits[loc] for loc in locators]
    else:
        tags = _seeded_split_tags(len(locators), _train_fraction(dataset_id), DEFAULT_SEED)

    entries = tuple(
        ManifestEntry(locator=loc, label=label, subject=subject, split=tag)
        for (loc, label, subject), tag in zip(records, tags)
    )
    for e in entries:
        if not 1 <= e.label <= n:
            raise SchemaError(f"label {e.label} outside [1,{n}]", )
    return DatasetManifest(
        dataset_id=dataset_id,
        class_count=n,
        seed=DEFAULT_SEED,
        entries=entries,
        schema=dataset_schema(dataset_id),
        root=root,
    )


def _train_fraction(dataset_id):
    total, train, _ = PROTOCOL_COUNTS[dataset_id]
    return train / total


def _seeded_split_tags(n, train_fraction, seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(n * train_fraction))
    tags = ["val"] * n
    for i in perm[:n_train]:
        tags[i] = "train"
    return tags


_DHG_DIR_RE = re.compile(
    r"gesture_(\d+)/finger_(\d+)/subject_(\d+)/essai_(\d+)$"
)


def _walk_dhg_like(root, family, fine):
    fname = _SKELETON_FILE[family]
    records = []
    for path in sorted(root.glob("gesture_*/finger_*/subject_*/essai_*/" + fname)):
        rel = path.parent.relative_to(root).as_posix()
        m = _DHG_DIR_RE.search(rel)
        if not m:
            continue
        g, f, s, _ = (int(x) for x in m.groups())
        label = g + 14 if (fine and f == 2) else g
        records.append((rel, label, f"subject_{s}"))
    return records


def _read_dhg_split_files(root):
    train_file = root / "train_gestures.txt"
    val_file = root / "test_gestures.txt"
    if not (train_file.is_file() and val_file.is_file()):
        return None
    splits = {}
    for path, tag in ((train_file, "train"), (val_file, "val")):
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 4:
                raise ParseError("expected 'gesture finger subject essai'", path, lineno)
            try:
                g, f, s, e = (int(p) for p in parts[:4])
            except ValueError:
                raise ParseError("non-integer field in split file", path, lineno) from None
            splits[f"gesture_{g}/finger_{f}/subject_{s}/essai_{e}"] = tag
    return splits


def _walk_lmdhg(root):
    records = []
    for path in sorted(root.glob("[0-9][0-9]_*/seq_*.txt")):
        label = int(path.parent.name[:2])
        records.append((path.relative_to(root).as_posix(), label, ""))
    return records


def _read_tagged_split_file(path):
    """Read `locator<TAB>split[<TAB>subject]` lines; (None, {}) when absent."""
    if not path.is_file():
        return None, {}
    splits = {}
    subjects = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 2 or parts[1] not in ("train", "val"):
            raise ParseError("expected 'locator<TAB>train|val'", path, lineno)
        splits[parts[0]] = parts[1]
        if len(parts) > 2:
            subjects[parts[0]] = parts[2]
    return splits, subjects


def _walk_fpha(root):
    records = []
    for path in sorted(root.glob("Subject_*/*/*/skeleton.txt")):
        rel = path.parent.relative_to(root).as_posix()
        subject = rel.split("/")[0]
        records.append((rel, subject))
    split_path = root / "data_split.txt"
    if split_path.is_file():
        splits, labels = _read_fpha_split(split_path)
        recs = [(rel, labels.get(rel, 0), subject) for rel, subject in records]
        missing = [r for r, lab, _ in recs if lab == 0]
        if missing:
            raise SchemaError(f"{len(missing)} sequences absent from data_split.txt, e.g. {missing[0]}")
        return recs, splits
    # No split file: derive labels from the sorted action slugs.
    actions = sorted({rel.split("/")[1] for rel, _ in records})
    action_label = {a: i + 1 for i, a in enumerate(actions)}
    recs = [(rel, action_label[rel.split("/")[1]], subject) for rel, subject in records]
    return recs, None


def _read_fpha_split(path):
    splits, labels = {}, {}
    tag = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] in ("train", "val"):
            tag = parts[0]
            continue
        if tag is None or len(parts) != 2:
            raise ParseError("expected 'train|val' header or 'locator label'", path, lineno)
        try:
            labels[parts[0]] = int(parts[1])
        except ValueError:
            raise ParseError("non-integer label", path, lineno) from None
        splits[parts[0]] = tag
    return splits, labels


def sequence_path(manifest: DatasetManifest, entry: ManifestEntry) -> Path:
    if manifest.root is None:
        raise ArgumentError("manifest has no root directory attached")
    family = dataset_family(manifest.dataset_id)
    if family in ("DHG1428", "SHREC2017"):
        return manifest.root / entry.locator / _SKELETON_FILE[family]
    if family == "FPHA":
        return manifest.root / entry.locator / "skeleton.txt"
    return manifest.root / entry.locator


def load_sequence(
    manifest: DatasetManifest, index: int, apply_camera_pose: bool = False
) -> SkeletonSequence:
    """Load one sequence by manifest index, validating every invariant.

    ``apply_camera_pose`` applies a 4x4 transform from ``camera_pose.txt``
    at the dataset root (FPHA only) when that file exists; the default
    assumes coordinates are distributed in world space.
    """
    if not 0 <= index < len(manifest.entries):
        raise ArgumentError(f"index {index} outside [0,{len(manifest.entries)})")
    entry = manifest.entries[index]
    path = sequence_path(manifest, entry)
    frames = read_skeleton_file(path, manifest.schema.joint_count)
    if apply_camera_pose and dataset_family(manifest.dataset_id) == "FPHA":
        pose_path = manifest.root / "camera_pose.txt"
        if pose_path.is_file():
            frames = _apply_pose(frames, pose_path)
    try:
        return SkeletonSequence(
            frames=frames,
            schema=manifest.schema,
            label=entry.label,
            subject=entry.subject or None,
            source_path=str(path),
        )
    except SchemaError as exc:
        raise ParseError(str(exc), path) from None


def read_skeleton_file(path, joint_count: int) -> np.ndarray:
    """Parse a plain-text skeleton file into a (T, J, 3) float array."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise NotFoundError(f"sequence file {path} does not exist") from None
    except OSError as exc:
        raise ParseError(f"cannot read sequence file: {exc}", path) from None
    frames = []
    width = 3 * joint_count
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != width:
            raise ParseError(
                f"expected {width} values ({joint_count} joints), got {len(tokens)}",
                path, lineno,
            )
        try:
            row = np.array(tokens, dtype=np.float64)
        except ValueError:
            raise ParseError("non-numeric coordinate", path, lineno) from None
        if not np.isfinite(row).all():
            raise ParseError("non-finite coordinate", path, lineno)
        frames.append(row.reshape(joint_count, 3))
    if len(frames) < 2:
        raise ParseError(f"sequence has {len(frames)} frames, need at least 2", path)
    return np.stack(frames)


def _apply_pose(frames, pose_path):
    rows = [line.split() for line in pose_path.read_text().splitlines() if line.strip()]
    mat = np.array(rows, dtype=np.float64)
    if mat.shape != (4, 4):
        raise ParseError(f"camera pose must be 4x4, got {mat.shape}", pose_path)
    pts = frames.reshape(-1, 3)
    out = pts @ mat[:3, :3].T + mat[:3, 3]
    return out.reshape(frames.shape)


def split(manifest: DatasetManifest):
    """Partition entries into (train, val) lists per their split tags."""
    train = [e for e in manifest.entries if e.split == "train"]
    val = [e for e in manifest.entries if e.split == "val"]
    return train, val


def check_protocol_counts(manifest: DatasetManifest):
    """Raise SchemaError unless the manifest matches its protocol totals."""
    total, n_train, n_val = PROTOCOL_COUNTS[manifest.dataset_id]
    train, val = split(manifest)
    got = (len(manifest.entries), len(train), len(val))
    if got != (total, n_train, n_val):
        raise SchemaError(
            f"{manifest.dataset_id} protocol expects {(total, n_train, n_val)}, got {got}"
        )


# ---------------------------------------------------------------------------
# index file round-trip (external interface)

def write_manifest(manifest: DatasetManifest, path):
    """Write the tab-separated index file: header, then one line per entry."""
    path = Path(path)
    lines = [f"{manifest.dataset_id}\t{manifest.class_count}\t{manifest.seed}"]
    for e in manifest.entries:
        lines.append(f"{e.locator}\t{e.label}\t{e.subject}\t{e.split}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path, root=None) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"manifest file {path} does not exist")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError("empty manifest file", path)
    header = lines[0].split("\t")
    if len(header) != 3:
        raise ParseError("header must be 'dataset_id<TAB>N<TAB>seed'", path, 1)
    dataset_id = header[0]
    try:
        n, seed = int(header[1]), int(header[2])
    except ValueError:
        raise ParseError("non-integer N or seed in header", path, 1) from None
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError("entry must be 'locator<TAB>label<TAB>subject<TAB>split'", path, lineno)
        try:
            label = int(parts[1])
        except ValueError:
            raise ParseError("non-integer label", path, lineno) from None
        entries.append(ManifestEntry(parts[0], label, parts[2], parts[3]))
    return DatasetManifest(
        dataset_id=dataset_id,
        class_count=n,
        seed=seed,
        entries=tuple(entries),
        schema=dataset_schema(dataset_id),
        root=Path(root) if root is not None else None,
    )


def subset_manifest(manifest: DatasetManifest, class_names) -> DatasetManifest:
    """Restrict a manifest to the named classes, relabelled 1..k in the
    order given. Split tags are preserved."""
    all_names = dataset_class_names(manifest.dataset_id)
    new_label = {}
    for k, name in enumerate(class_names, start=1):
        if name not in all_names:
            raise ArgumentError(f"{name!r} is not a class of {manifest.dataset_id}")
        new_label[all_names.index(name) + 1] = k
    entries = tuple(
        ManifestEntry(e.locator, new_label[e.label], e.subject, e.split)
        for e in manifest.entries
        if e.label in new_label
    )
    if not entries:
        raise ArgumentError("subset selects no entries")
    return DatasetManifest(
        dataset_id=manifest.dataset_id,
        class_count=len(new_label),
        seed=manifest.seed,
        entries=entries,
        schema=manifest.schema,
        root=manifest.root,
    )
