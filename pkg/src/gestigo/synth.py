"""Deterministic synthetic gesture corpora.

Builds dataset trees that follow the documented on-disk layouts and
protocol counts, with class-specific motion patterns (swipes, rotations,
pinches, ...) so that downstream training has real signal to learn. Every
sequence is derived from a seeded per-locator RNG, so regenerating a tree
is bit-reproducible regardless of generation order.

Geometry is calibrated against the condensation margin: after assembly
each sequence is uniformly shrunk (about its centroid) just enough that
every joint, in every view orientation, stays at least ``margin`` world
units away from the rendered canvas border implied by
``zoom = max extent + gamma``.
"""

from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np

from .datasets import (
    DHG14_CLASSES,
    FPHA_CLASSES,
    LMDHG_CLASSES,
    dataset_family,
    dataset_schema,
)
from .errors import ArgumentError

DEFAULT_TREE_SEED = 29

# ---------------------------------------------------------------------------
# hand template

_FINGER_ANGLES = np.deg2rad([-52.0, -18.0, 0.0, 17.0, 34.0])
_FINGER_RADII = np.array([
    [0.25, 0.45, 0.63, 0.78],   # thumb
    [0.45, 0.68, 0.84, 0.96],   # index
    [0.46, 0.72, 0.90, 1.03],   # middle
    [0.45, 0.68, 0.85, 0.97],   # ring
    [0.42, 0.60, 0.73, 0.83],   # pinky
])
_PULL_WEIGHTS = np.array([0.12, 0.45, 0.78, 1.0])  # per joint along a finger
_CURL_TARGET = np.array([0.0, 0.28, -0.20])
_SPREAD_FACTOR = np.array([-1.0, -0.45, 0.0, 0.45, 1.0]) * 0.35

# number of non-finger prefix joints per single-hand template kind
_PREFIX = {"h21": 1, "h22": 2, "h23": 3}


def _hand_template(kind: str = "h21") -> np.ndarray:
    prefix = _PREFIX[kind]
    rows = [np.zeros(3)]
    if prefix == 3:
        rows = [np.array([0.0, -0.55, 0.0]), np.zeros(3)]
    if prefix >= 2:
        rows.append(np.array([0.0, 0.32, 0.02]))
    pts = []
    for ang, radii in zip(_FINGER_ANGLES, _FINGER_RADII):
        d = np.array([np.sin(ang), np.cos(ang), 0.0])
        for r in radii:
            p = r * d
            p[2] = 0.05 * r
            pts.append(p)
    return np.array(rows + pts)


def _finger_joint_ids(kind):
    prefix = _PREFIX[kind]
    return [list(range(prefix + 4 * f, prefix + 4 * f + 4)) for f in range(5)]


def _pull_vector(kind, fingers):
    """Per-joint pull weight vector selecting the given finger indices."""
    j = _PREFIX[kind] + 20
    w = np.zeros(j)
    for f in fingers:
        w[_finger_joint_ids(kind)[f]] = _PULL_WEIGHTS
    return w


def _pose_hand(kind, curl, spread, pinch, point):
    """Articulate the template over time; all profile args are (T,) arrays.

    ``curl`` closes all fingers toward the palm, ``point`` closes all but
    the index, ``pinch`` draws thumb and index tips together, ``spread``
    fans the fingers apart. Returns (T, J, 3).
    """
    base = _hand_template(kind)
    t = len(curl)
    j = base.shape[0]

    k = np.zeros(j)
    for f, ids in enumerate(_finger_joint_ids(kind)):
        k[ids] = _SPREAD_FACTOR[f]
    ang = spread[:, None] * k[None, :]
    ca, sa = np.cos(ang), np.sin(ang)
    pts = np.empty((t, j, 3))
    pts[:, :, 0] = ca * base[None, :, 0] - sa * base[None, :, 1]
    pts[:, :, 1] = sa * base[None, :, 0] + ca * base[None, :, 1]
    pts[:, :, 2] = base[None, :, 2]

    w_curl = _pull_vector(kind, range(5))
    w_point = _pull_vector(kind, (0, 2, 3, 4))
    fingers = _finger_joint_ids(kind)
    pinch_target = 0.5 * (base[fingers[0][3]] + base[fingers[1][3]])
    w_pinch = _pull_vector(kind, (0, 1))

    for amount, w, target in (
        (curl, w_curl, _CURL_TARGET),
        (point, w_point, _CURL_TARGET),
        (pinch, w_pinch, pinch_target),
    ):
        a = np.clip(amount, 0.0, 1.0)
        pts += (a[:, None] * w[None, :])[:, :, None] * (target[None, None, :] - pts)
    return pts


# ---------------------------------------------------------------------------
# motion vocabulary

def _smooth(s):
    return s * s * (3.0 - 2.0 * s)


def _bump(s):
    return np.sin(np.pi * s)


def _polyline(s, pts2d, knots, amp):
    pts2d = np.asarray(pts2d, dtype=np.float64)
    x = np.interp(s, knots, pts2d[:, 0]) * amp
    y = np.interp(s, knots, pts2d[:, 1]) * amp
    return np.stack([x, y, np.zeros_like(s)], axis=1)


def _along(s_profile, direction):
    return s_profile[:, None] * np.asarray(direction, dtype=np.float64)[None, :]


def _zero_motion(t):
    z = np.zeros(t)
    return {
        "path": np.zeros((t, 3)), "curl": z.copy(), "spread": z.copy(),
        "pinch": z.copy(), "point": z.copy(), "rot": z.copy(),
    }


def _dhg_motion(gesture: int, performance: str, s: np.ndarray) -> dict:
    t = len(s)
    m = _zero_motion(t)
    sm = _smooth(s)
    centered = sm - 0.5
    if gesture == 1:    # Grab
        m["curl"] = 0.75 * sm
        m["path"] = _along(sm, (0.0, -0.05, 0.07))
    elif gesture == 2:  # Tap
        m["path"] = _along(_bump(s) ** 1.5, (0.0, -0.02, -0.13))
    elif gesture == 3:  # Expand
        m["curl"] = 0.55 * (1.0 - sm)
        m["spread"] = 0.5 * sm
    elif gesture == 4:  # Pinch
        m["pinch"] = 0.85 * sm
    elif gesture == 5:  # Rotation CW
        m["rot"] = -2.4 * sm
        m["path"] = 0.035 * np.stack(
            [np.cos(2.4 * sm), -np.sin(2.4 * sm), np.zeros(t)], axis=1)
    elif gesture == 6:  # Rotation CCW
        m["rot"] = 2.4 * sm
        m["path"] = 0.035 * np.stack(
            [np.cos(2.4 * sm), np.sin(2.4 * sm), np.zeros(t)], axis=1)
    elif gesture == 7:  # Swipe Right
        m["path"] = _along(centered, (0.26, 0.0, 0.0))
    elif gesture == 8:  # Swipe Left
        m["path"] = _along(centered, (-0.26, 0.0, 0.0))
    elif gesture == 9:  # Swipe Up
        m["path"] = _along(centered, (0.0, 0.26, 0.0))
    elif gesture == 10:  # Swipe Down
        m["path"] = _along(centered, (0.0, -0.26, 0.0))
    elif gesture == 11:  # Swipe X
        m["path"] = _polyline(
            s, [(-1, 1), (1, -1), (1, 1), (-1, -1)], [0.0, 0.42, 0.58, 1.0], 0.12)
    elif gesture == 12:  # Swipe +
        m["path"] = _polyline(
            s, [(-1, 0), (1, 0), (0, 1), (0, -1)], [0.0, 0.42, 0.58, 1.0], 0.13)
    elif gesture == 13:  # Swipe V
        m["path"] = _polyline(s, [(-1, 0.9), (0, -1), (1, 0.9)], [0.0, 0.5, 1.0], 0.12)
    elif gesture == 14:  # Shake
        m["path"] = _along(0.11 * np.sin(2 * np.pi * 2.2 * s) * _bump(s) ** 0.5,
                           (1.0, 0.0, 0.0))
    else:
        raise ArgumentError(f"gesture index {gesture} outside [1,14]")
    if performance == "finger" and gesture not in (1, 3, 4):
        m["point"] = np.minimum(m["point"] + 0.55, 1.0)
    return m


def _lmdhg_motion(label: int, s: np.ndarray) -> tuple[dict, dict, np.ndarray]:
    """Motions for both hands plus a per-frame hand separation factor."""
    t = len(s)
    sm = _smooth(s)
    a = _zero_motion(t)
    b = _zero_motion(t)
    sep = np.ones(t)
    if label == 1:      # Point To
        a["point"] = 0.8 * sm
        a["path"] = _along(sm, (0.0, 0.0, -0.11))
    elif label == 2:    # Catch
        a["curl"] = 0.7 * _bump(s) ** 0.8
        a["path"] = _along(_bump(s), (0.0, 0.0, -0.06))
    elif label == 3:    # Shake Down
        a["path"] = _along(-0.11 * _bump(s) + 0.05 * np.sin(2 * np.pi * 2.5 * s),
                           (0.0, 1.0, 0.0))
    elif label == 4:    # Shake
        a["path"] = _along(0.11 * np.sin(2 * np.pi * 2.2 * s) * _bump(s) ** 0.5,
                           (1.0, 0.0, 0.0))
    elif label == 5:    # Scroll
        a["curl"] = 0.35 + 0.3 * np.sin(2 * np.pi * 2.0 * s)
        a["path"] = _along(0.05 * np.sin(2 * np.pi * 2.0 * s), (0.0, 1.0, 0.0))
    elif label == 6:    # Draw C
        phi = np.deg2rad(70.0 + 220.0 * sm)
        a["path"] = 0.13 * np.stack([np.cos(phi), np.sin(phi), np.zeros(t)], axis=1)
    elif label == 7:    # Slice
        a["path"] = _along(_smooth(s ** 0.6) - 0.5, (0.24, 0.0, -0.03))
    elif label == 8:    # Rotate
        phi = 2 * np.pi * sm
        a["path"] = 0.10 * np.stack([np.cos(phi), np.sin(phi), np.zeros(t)], axis=1)
        a["rot"] = phi
    elif label == 9:    # Draw Line
        a["path"] = _along(sm - 0.5, (0.24, 0.0, 0.0))
    elif label == 10:   # Shake Two Hands
        osc = 0.10 * np.sin(2 * np.pi * 2.0 * s) * _bump(s) ** 0.5
        a["path"] = _along(osc, (1.0, 0.0, 0.0))
        b["path"] = _along(-osc, (1.0, 0.0, 0.0))
    elif label == 11:   # Catch Two Hands
        a["curl"] = 0.65 * sm
        b["curl"] = 0.65 * sm
        sep = 1.0 - 0.35 * sm
    elif label == 12:   # Point To Raised
        a["point"] = 0.8 * sm
        a["path"] = _along(sm, (0.0, 0.10, -0.08))
    elif label == 13:   # Zoom
        sep = 1.0 + 0.8 * sm
    else:
        raise ArgumentError(f"label {label} outside [1,13]")
    return a, b, sep


def _fpha_motion(label: int, s: np.ndarray) -> dict:
    """Label-seeded procedural motion; consistent across all samples."""
    t = len(s)
    rng = np.random.default_rng([977, label])
    m = _zero_motion(t)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    amp = 0.08 + 0.13 * rng.random()
    mode = int(rng.integers(0, 4))
    sm = _smooth(s)
    if mode == 0:
        m["path"] = _along(amp * (sm - 0.5), d)
    elif mode == 1:
        m["path"] = _along(amp * _bump(s) ** 1.2, d)
    elif mode == 2:
        f = 1.5 + 1.5 * rng.random()
        m["path"] = _along(amp * np.sin(2 * np.pi * f * s) * _bump(s) ** 0.5, d)
    else:
        e = rng.normal(size=3)
        e -= (e @ d) * d
        e /= np.linalg.norm(e)
        phi = np.deg2rad(40.0 + 250.0 * rng.random()) * sm
        m["path"] = amp * (np.cos(phi)[:, None] * d[None, :]
                           + np.sin(phi)[:, None] * e[None, :])
    m["curl"] = (0.7 * rng.random()) * (_bump(s) if rng.random() < 0.5 else sm)
    m["rot"] = (1.4 * rng.random() - 0.7) * sm
    if rng.random() < 0.3:
        m["pinch"] = (0.6 * rng.random()) * sm
    return m


# ---------------------------------------------------------------------------
# sequence assembly

def _rot_xyz(ax, ay, az):
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rx @ ry @ rz


def _rotz_stack(angles):
    t = len(angles)
    c, s = np.cos(angles), np.sin(angles)
    out = np.zeros((t, 3, 3))
    out[:, 0, 0] = c
    out[:, 0, 1] = -s
    out[:, 1, 0] = s
    out[:, 1, 1] = c
    out[:, 2, 2] = 1.0
    return out


def _smooth_noise(rng, shape, sigma, width=5):
    noise = rng.normal(0.0, sigma, shape)
    if width > 1:
        pad = np.concatenate(
            [np.repeat(noise[:1], width // 2, axis=0), noise,
             np.repeat(noise[-1:], width - 1 - width // 2, axis=0)], axis=0)
        cs = np.cumsum(pad, axis=0)
        noise = (cs[width:] - cs[:-width]) / width
        noise = np.concatenate([noise[:1], noise], axis=0)[: shape[0]]
    return noise


def _assemble_hand(kind, motion, h, r0, centers, mirror=False):
    pts = _pose_hand(kind, motion["curl"], motion["spread"],
                     motion["pinch"], motion["point"])
    if mirror:
        pts = pts * np.array([-1.0, 1.0, 1.0])
    rr = np.einsum("tij,jk->tik", _rotz_stack(motion["rot"]), r0)
    world = np.einsum("tij,tkj->tki", rr, pts * h)
    return world + centers[:, None, :]


def _jitter_path(path, rng):
    scale = rng.uniform(0.88, 1.12, 3)
    psi = rng.uniform(-0.16, 0.16)
    rz = _rot_xyz(0.0, 0.0, psi)
    return (path * scale[None, :]) @ rz.T


def _contain(frames, gamma=0.125, margin=0.03):
    """Uniformly shrink about the centroid until every camera-plane
    direction keeps all joints ``margin`` inside the zoom square."""
    flat = frames.reshape(-1, 3)
    centroid = flat.mean(axis=0)
    q = flat - centroid
    d = np.abs(q).max(axis=0)
    dn = float(np.linalg.norm(d))
    ext = flat.max(axis=0) - flat.min(axis=0)
    e = float(ext.max())
    if dn <= e / 2.0 + gamma / 2.0 - margin or dn == 0.0:
        return frames
    alpha = (gamma / 2.0 - margin) / (dn - e / 2.0)
    alpha = min(1.0, 0.98 * alpha)
    return (centroid + alpha * q).reshape(frames.shape)


def _sequence_rng(seed, family, locator):
    return np.random.default_rng(
        [seed, zlib.crc32(family.encode()), zlib.crc32(locator.encode())]
    )


def _common_draws(rng):
    t = int(rng.integers(18, 49))
    s = np.linspace(0.0, 1.0, t) ** rng.uniform(0.78, 1.32)
    h = 0.075 * rng.uniform(0.85, 1.15)
    centre = rng.uniform(-0.6, 0.6, 3)
    r0 = _rot_xyz(*rng.uniform(-0.2, 0.2, 3))
    return t, s, h, centre, r0


def generate_frames(dataset_id: str, label: int, locator: str,
                    seed: int = DEFAULT_TREE_SEED,
                    performance: str = "hand") -> np.ndarray:
    """Synthesize the (T, J, 3) frames of one gesture, deterministically."""
    family = dataset_family(dataset_id)
    rng = _sequence_rng(seed, family, locator)
    t, s, h, centre, r0 = _common_draws(rng)

    if family in ("DHG1428", "SHREC2017"):
        gesture = ((label - 1) % 14) + 1
        m = _dhg_motion(gesture, performance, s)
        m["path"] = _jitter_path(m["path"], rng)
        frames = _assemble_hand("h22", m, h, r0, centre[None, :] + m["path"])
    elif family == "FPHA":
        m = _fpha_motion(label, s)
        m["path"] = _jitter_path(m["path"], rng)
        frames = _assemble_hand("h21", m, h, r0, centre[None, :] + m["path"])
    else:
        ma, mb, sep = _lmdhg_motion(label, s)
        ma["path"] = _jitter_path(ma["path"], rng)
        mb["path"] = _jitter_path(mb["path"], rng)
        half = 0.5 * 0.27 * rng.uniform(0.9, 1.1) * sep
        off_a = np.stack([-half, np.zeros(t), np.zeros(t)], axis=1)
        r0_b = _rot_xyz(*rng.uniform(-0.2, 0.2, 3))
        hand_a = _assemble_hand("h23", ma, h, r0, centre[None, :] + ma["path"] + off_a)
        hand_b = _assemble_hand("h23", mb, h, r0_b,
                                centre[None, :] + mb["path"] - off_a, mirror=True)
        frames = np.concatenate([hand_a, hand_b], axis=1)

    frames += _smooth_noise(rng, frames.shape, 0.002)
    frames = _contain(frames)
    expected = dataset_schema(dataset_id).joint_count
    if frames.shape[1] != expected:
        raise ArgumentError(f"assembled {frames.shape[1]} joints, schema wants {expected}")
    return frames


# ---------------------------------------------------------------------------
# tree generation

def _slug(name):
    return name.lower().replace(" ", "_").replace("+", "plus")


def write_sequence_file(path: Path, frames: np.ndarray) -> None:
    t = frames.shape[0]
    np.savetxt(path, frames.reshape(t, -1), fmt="%.6f")


def generate_dataset_tree(dataset_id: str, root, seed: int = DEFAULT_TREE_SEED,
                          size: str = "full") -> Path:
    """Materialize a synthetic dataset tree under ``root``.

    ``size="full"`` reproduces the protocol counts; ``size="toy"`` writes
    a small tree for fast tests; ``size="swipes"`` (DHG/SHREC families)
    covers only the seven swipe gestures at medium scale. Returns ``root``.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    family = dataset_family(dataset_id)
    if family in ("DHG1428", "SHREC2017"):
        _generate_dhg_like(dataset_id, root, seed, size)
    elif family == "LMDHG":
        _generate_lmdhg(root, seed, size)
    else:
        _generate_fpha(root, seed, size)
    return root


def _generate_dhg_like(dataset_id, root, seed, size):
    family = dataset_family(dataset_id)
    fname = "skeleton_world.txt" if family == "DHG1428" else "skeletons_world.txt"
    if size == "toy":
        gestures, fingers, subjects = (7, 9, 10, 11), (1, 2), (1, 2, 3)
        essais = {s: 1 for s in subjects}
    elif size == "swipes":
        # the seven directional swipe gestures only, mid-sized
        gestures, fingers, subjects = range(7, 14), (1, 2), range(1, 15)
        essais = {s: 2 for s in subjects}
    elif family == "DHG1428":
        gestures, fingers, subjects = range(1, 15), (1, 2), range(1, 21)
        essais = {s: 5 for s in subjects}
    else:
        # 28 subjects with uneven trial counts per (gesture, finger): the
        # first 16 subjects contribute 4, the rest 3, totalling 100 each.
        gestures, fingers, subjects = range(1, 15), (1, 2), range(1, 29)
        essais = {s: (4 if s <= 16 else 3) for s in subjects}
    locators = []
    for g in gestures:
        for f in fingers:
            for s in subjects:
                for e in range(1, essais[s] + 1):
                    loc = f"gesture_{g}/finger_{f}/subject_{s}/essai_{e}"
                    locators.append(loc)
                    d = root / loc
                    d.mkdir(parents=True, exist_ok=True)
                    frames = generate_frames(
                        dataset_id, g, loc, seed,
                        performance="finger" if f == 1 else "hand",
                    )
                    write_sequence_file(d / fname, frames)
    if family == "SHREC2017":
        _write_shrec_split_files(root, locators, seed)


def _write_shrec_split_files(root, locators, seed):
    rng = np.random.default_rng(seed + 1)
    perm = rng.permutation(len(locators))
    n_train = int(round(0.7 * len(locators)))
    chosen = {
        "train": sorted(perm[:n_train]),
        "test": sorted(perm[n_train:]),
    }
    for tag, ids in chosen.items():
        lines = []
        for i in ids:
            parts = locators[i].split("/")
            nums = [p.split("_")[1] for p in parts]
            lines.append(" ".join(nums))
        (root / f"{tag}_gestures.txt").write_text("\n".join(lines) + "\n")


def _generate_lmdhg(root, seed, size):
    if size == "toy":
        per_class = {k: 6 for k in range(1, 5)}
    else:
        per_class = {k: (47 if k <= 10 else 46) for k in range(1, 14)}
    for label, count in per_class.items():
        d = root / f"{label:02d}_{_slug(LMDHG_CLASSES[label - 1])}"
        d.mkdir(parents=True, exist_ok=True)
        for i in range(1, count + 1):
            loc = f"{d.name}/seq_{i:04d}.txt"
            frames = generate_frames("LMDHG", label, loc, seed)
            write_sequence_file(root / loc, frames)


def _generate_fpha(root, seed, size):
    if size == "toy":
        counts = {a: 6 for a in FPHA_CLASSES[:5]}
    else:
        counts = {a: (27 if i < 5 else 26) for i, a in enumerate(FPHA_CLASSES)}
    for action, count in counts.items():
        label = FPHA_CLASSES.index(action) + 1
        per_subject = {}
        for i in range(count):
            subj = (i % 6) + 1
            per_subject[subj] = per_subject.get(subj, 0) + 1
            loc = f"Subject_{subj}/{action}/{per_subject[subj]}"
            d = root / loc
            d.mkdir(parents=True, exist_ok=True)
            frames = generate_frames("FPHA", label, loc, seed)
            write_sequence_file(d / "skeleton.txt", frames)


def synthetic_sequence(dataset_id: str, label: int, seed: int = 0):
    """One free-standing synthetic gesture as a SkeletonSequence."""
    from .datasets import SkeletonSequence

    frames = generate_frames(dataset_id, label, f"adhoc/{label}/{seed}", seed)
    return SkeletonSequence(
        frames=frames, schema=dataset_schema(dataset_id), label=label,
        source_path=f"synthetic:{dataset_id}:{label}:{seed}",
    )
