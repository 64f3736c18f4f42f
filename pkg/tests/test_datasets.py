"""Dataset tree parsing, manifest round-trips, and schema invariants."""

import numpy as np
import pytest

from gestigo.datasets import (
    DATASET_IDS, DHG14_CLASSES, HAND21, HAND22, HAND46, SCHEMAS_BY_JOINT_COUNT,
    SWIPE_CLASSES, SkeletonSequence, dataset_class_names, dataset_schema,
    load_sequence, parse_dataset, read_manifest, read_skeleton_file, split,
    subset_manifest, write_manifest,
)
from gestigo.errors import (
    ArgumentError, NotFoundError, ParseError, SchemaError,
)
from gestigo.synth import generate_frames, synthetic_sequence


# -- schemas ------------------------------------------------------------------

def test_schema_joint_counts():
    assert HAND21.joint_count == 21
    assert HAND22.joint_count == 22
    assert HAND46.joint_count == 46
    assert SCHEMAS_BY_JOINT_COUNT == {21: HAND21, 22: HAND22, 46: HAND46}


def test_fingertip_indices():
    assert HAND21.fingertip_indices == (4, 8, 12, 16, 20)
    assert HAND22.fingertip_indices == (5, 9, 13, 17, 21)
    assert len(HAND46.fingertip_indices) == 10


def test_bones_reference_valid_joints():
    for schema in (HAND21, HAND22, HAND46):
        for a, b in schema.bones:
            assert 0 <= a < schema.joint_count
            assert 0 <= b < schema.joint_count
        # every fingertip is an endpoint of some bone
        ends = {j for bone in schema.bones for j in bone}
        assert set(schema.fingertip_indices) <= ends


def test_dataset_tables_cover_all_ids():
    for did in DATASET_IDS:
        names = dataset_class_names(did)
        assert len(names) == len(set(names))
        assert dataset_schema(did).joint_count in SCHEMAS_BY_JOINT_COUNT


def test_dhg_class_inventory():
    assert len(DHG14_CLASSES) == 14
    assert DHG14_CLASSES[6] == "Swipe Right"   # labels 7..13 are the swipes
    assert set(SWIPE_CLASSES) <= set(DHG14_CLASSES)
    assert len(dataset_class_names("DHG1428_28G")) == 28


# -- SkeletonSequence invariants ----------------------------------------------

def test_sequence_rejects_bad_shapes():
    good = np.zeros((3, 22, 3))
    with pytest.raises(SchemaError):
        SkeletonSequence(frames=good[:, :, :2], schema=HAND22)
    with pytest.raises(SchemaError):
        SkeletonSequence(frames=np.zeros((3, 21, 3)), schema=HAND22)
    with pytest.raises(SchemaError):
        SkeletonSequence(frames=good[:1], schema=HAND22)
    bad = good.copy()
    bad[1, 0, 0] = np.nan
    with pytest.raises(SchemaError):
        SkeletonSequence(frames=bad, schema=HAND22)
    with pytest.raises(SchemaError):
        SkeletonSequence(frames=good, schema=HAND22, label=0)


def test_sequence_frames_are_read_only():
    seq = SkeletonSequence(frames=np.zeros((3, 22, 3)), schema=HAND22)
    with pytest.raises(ValueError):
        seq.frames[0, 0, 0] = 1.0


# -- toy tree parsing ---------------------------------------------------------

def test_parse_dhg_toy(dhg_toy_manifest):
    m = dhg_toy_manifest
    assert len(m.entries) == 24                     # 4 gestures x 2 fingers x 3 subjects
    assert m.class_count == 14
    assert sorted(set(e.label for e in m.entries)) == [7, 9, 10, 11]
    train, val = split(m)
    assert len(train) > 0 and len(val) > 0
    assert len(train) + len(val) == 24
    # locators are sorted and unique
    locs = [e.locator for e in m.entries]
    assert locs == sorted(locs) and len(set(locs)) == 24


def test_parse_is_deterministic(dhg_toy_root):
    a = parse_dataset("DHG1428_14G", dhg_toy_root)
    b = parse_dataset("DHG1428_14G", dhg_toy_root)
    assert a == b


def test_dhg_28g_labels_split_by_finger(dhg_toy_root):
    m = parse_dataset("DHG1428_28G", dhg_toy_root)
    assert m.class_count == 28
    for e in m.entries:
        g = int(e.locator.split("/")[0].split("_")[1])
        f = int(e.locator.split("/")[1].split("_")[1])
        assert e.label == (g if f == 1 else g + 14)


def test_parse_shrec_honors_split_files(shrec_toy_root):
    m = parse_dataset("SHREC2017_14G", shrec_toy_root)
    want = {}
    for path, tag in ((shrec_toy_root / "train_gestures.txt", "train"),
                      (shrec_toy_root / "test_gestures.txt", "val")):
        for line in path.read_text().splitlines():
            g, f, s, e = line.split()
            want[f"gesture_{g}/finger_{f}/subject_{s}/essai_{e}"] = tag
    assert {e.locator: e.split for e in m.entries} == want


def test_parse_lmdhg_toy(lmdhg_toy_root):
    m = parse_dataset("LMDHG", lmdhg_toy_root)
    assert len(m.entries) == 24                     # 4 classes x 6 sequences
    assert m.schema is HAND46
    assert sorted(set(e.label for e in m.entries)) == [1, 2, 3, 4]


def test_parse_fpha_toy(fpha_toy_root):
    m = parse_dataset("FPHA", fpha_toy_root)
    assert len(m.entries) == 30                     # 5 actions x 6 trials
    assert m.schema is HAND21
    assert all(e.subject.startswith("Subject_") for e in m.entries)
    # without a split file the labels follow the sorted action slugs
    assert len(set(e.label for e in m.entries)) == 5


def test_load_sequence_validates(dhg_toy_manifest):
    seq = load_sequence(dhg_toy_manifest, 0)
    assert seq.frames.shape[1:] == (22, 3)
    assert seq.frame_count >= 2
    assert seq.label == dhg_toy_manifest.entries[0].label
    with pytest.raises(ArgumentError):
        load_sequence(dhg_toy_manifest, len(dhg_toy_manifest.entries))


def test_parse_missing_root():
    with pytest.raises(NotFoundError):
        parse_dataset("DHG1428_14G", "/nonexistent/tree")


def test_parse_unknown_dataset(dhg_toy_root):
    with pytest.raises(ArgumentError):
        parse_dataset("NOPE", dhg_toy_root)


# -- skeleton file corruption -------------------------------------------------

def test_skeleton_file_errors(tmp_path):
    p = tmp_path / "seq.txt"

    p.write_text("0 0 0\n")                         # wrong arity
    with pytest.raises(ParseError):
        read_skeleton_file(p, 22)

    p.write_text(" ".join(["x"] * 66) + "\n")        # non-numeric
    with pytest.raises(ParseError):
        read_skeleton_file(p, 22)

    p.write_text(" ".join(["inf"] * 66) + "\n" + " ".join(["0"] * 66))
    with pytest.raises(ParseError):
        read_skeleton_file(p, 22)

    p.write_text(" ".join(["0"] * 66) + "\n")        # single frame
    with pytest.raises(ParseError) as exc:
        read_skeleton_file(p, 22)
    assert "frames" in str(exc.value)

    with pytest.raises(NotFoundError):
        read_skeleton_file(tmp_path / "absent.txt", 22)


def test_corrupted_files_never_escape_structured_errors(tmp_path):
    """Fuzz-lite: truncations and garbage always raise a gestigo error."""
    good = "\n".join(" ".join(f"{v:.3f}" for v in row)
                     for row in np.random.default_rng(5).normal(size=(4, 66)))
    corpus = [
        good[: len(good) // 2],                     # mid-line truncation
        good.replace("0.", "0,", 3),                # locale-style commas
        "\x00\x01\x02",                             # binary garbage
        "",                                          # empty file
        good + "\n1 2 3",                            # trailing short line
    ]
    for i, text in enumerate(corpus):
        p = tmp_path / f"bad_{i}.txt"
        p.write_text(text)
        with pytest.raises((ParseError, NotFoundError)):
            read_skeleton_file(p, 22)


# -- manifest round-trip ------------------------------------------------------

def test_manifest_round_trip(dhg_toy_manifest, tmp_path):
    path = tmp_path / "index.tsv"
    write_manifest(dhg_toy_manifest, path)
    again = read_manifest(path, root=dhg_toy_manifest.root)
    assert again == dhg_toy_manifest
    # a second serialization is byte-identical
    path2 = tmp_path / "index2.tsv"
    write_manifest(again, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_read_manifest_errors(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("")
    with pytest.raises(ParseError):
        read_manifest(p)
    p.write_text("DHG1428_14G\t14\n")               # header missing seed
    with pytest.raises(ParseError):
        read_manifest(p)
    p.write_text("DHG1428_14G\t14\t17\na\tx\ts\ttrain\n")
    with pytest.raises(ParseError):
        read_manifest(p)


# -- subsetting ---------------------------------------------------------------

def test_subset_manifest_relabels(dhg_toy_manifest):
    sub = subset_manifest(dhg_toy_manifest, ("Swipe Up", "Swipe Down"))
    assert sub.class_count == 2
    # Swipe Up is DHG label 9, Swipe Down is 10; toy tree has both
    assert sorted(set(e.label for e in sub.entries)) == [1, 2]
    by_loc = {e.locator: e for e in dhg_toy_manifest.entries}
    for e in sub.entries:
        old = by_loc[e.locator]
        assert old.label in (9, 10)
        assert e.label == (1 if old.label == 9 else 2)
        assert e.split == old.split                  # split tags preserved


def test_subset_manifest_rejects_unknown_class(dhg_toy_manifest):
    with pytest.raises(ArgumentError):
        subset_manifest(dhg_toy_manifest, ("Swipe Up", "Moonwalk"))
    with pytest.raises(ArgumentError):
        subset_manifest(dhg_toy_manifest, ("Grab",))  # not in the toy tree


# -- synthetic generator sanity -----------------------------------------------

def test_generate_frames_deterministic():
    a = generate_frames("DHG1428_14G", 9, "gesture_9/finger_1/subject_1/essai_1")
    b = generate_frames("DHG1428_14G", 9, "gesture_9/finger_1/subject_1/essai_1")
    assert np.array_equal(a, b)
    c = generate_frames("DHG1428_14G", 9, "gesture_9/finger_1/subject_1/essai_2")
    assert not np.array_equal(a, c)


def test_synthetic_sequence_schemas():
    for did, joints in (("DHG1428_14G", 22), ("LMDHG", 46), ("FPHA", 21)):
        seq = synthetic_sequence(did, 1, seed=3)
        assert seq.frames.shape[1] == joints
        assert np.isfinite(seq.frames).all()


def test_swipe_motions_are_directional():
    """Swipe Up and Swipe Down displace the hand in opposite y directions."""
    up = synthetic_sequence("DHG1428_14G", 9, seed=11).frames
    down = synthetic_sequence("DHG1428_14G", 10, seed=11).frames
    dy_up = up[-1].mean(axis=0)[1] - up[0].mean(axis=0)[1]
    dy_down = down[-1].mean(axis=0)[1] - down[0].mean(axis=0)[1]
    assert dy_up > 0 > dy_down
