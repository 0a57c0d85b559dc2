from collections import Counter
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hierlstm.dataset_io import (
    DatasetManifest, ParseError, format_counts, load_dataset, read_manifest, read_scene, scene_from_text,
    scene_to_text, validate_dataset, write_dataset, write_scene,
)
from hierlstm.scenegen import Scene, TaskSpec, Tracklet, generate_dataset


def majority_spec(**kw):
    return TaskSpec(**{"rule": "majority", "num_actions": 3, "num_activities": 3,
                       "persons_per_scene": (2, 5), "timesteps": 4, "obs_dim": 3, **kw})


def test_round_trip_generated_scenes(tmp_path):
    train, test = generate_dataset(TaskSpec(rule="left_right", num_actions=4, num_activities=6,
                                            persons_per_scene=(2, 6)), 10, 5)
    for s in train + test:
        path = tmp_path / f"{s.scene_id}.txt"
        write_scene(s, path)
        assert read_scene(path) == s


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_round_trip_is_value_exact(T, K, O, seed):
    r = np.random.default_rng(seed)
    persons = [Tracklet(r.standard_normal((T, O)) * 10.0 ** r.integers(-300, 300),
                        r.integers(-1, 3, T), r.uniform(-1e6, 1e6, (T, 2))) for _ in range(K)]
    s = Scene(persons, r.integers(0, 3, T), scene_id=int(r.integers(0, 10**6)))
    assert scene_from_text(scene_to_text(s)) == s


def test_minimal_scene_is_five_lines():
    s = Scene([Tracklet([[0.5]], [0], [[0.1, 0.2]])], [1], scene_id=7)
    lines = scene_to_text(s).splitlines()
    assert len(lines) == 5
    assert lines[1].split() == ["7", "1", "1", "1", "1"]


def test_truncated_file_reports_line(tmp_path):
    s = generate_dataset(majority_spec(persons_per_scene=(2, 2)), 1, 1)[0][0]
    lines = scene_to_text(s).splitlines()
    path = tmp_path / "cut.txt"
    path.write_text("\n".join(lines[:7]) + "\n")
    with pytest.raises(ParseError) as e:
        read_scene(path)
    assert e.value.line == 8 and "cut.txt:8" in str(e.value)


def test_malformed_values_report_line():
    s = generate_dataset(majority_spec(persons_per_scene=(2, 2)), 1, 1)[0][0]
    lines = scene_to_text(s).splitlines()
    bad = list(lines)
    bad[4] = bad[4].replace(bad[4].split()[0], "abc", 1)
    with pytest.raises(ParseError, match=":5:"):
        scene_from_text("\n".join(bad))
    bad = list(lines)
    bad[2] = bad[2] + " 0"
    with pytest.raises(ParseError, match=":3:"):
        scene_from_text("\n".join(bad))
    with pytest.raises(ParseError, match=":1:"):
        scene_from_text("HIERLSTM-SCENE 9\n" + "\n".join(lines[1:]))
    with pytest.raises(ParseError, match="trailing"):
        scene_from_text("\n".join(lines + ["1 2 3"]))


def test_manifest_round_trip_and_errors():
    man = DatasetManifest(2, 2, ["a", "b"], ["x", "y"], 3, [{"file": "s.txt", "split": "train"}])
    assert DatasetManifest.from_text(man.to_text()) == man
    with pytest.raises(ParseError, match=":1:"):
        DatasetManifest.from_text("WRONG 1\n{}")
    with pytest.raises(ParseError):
        DatasetManifest.from_text("HIERLSTM-MANIFEST 1\n{bad json")


def test_write_then_validate_and_load(tmp_path):
    spec = majority_spec()
    train, test = generate_dataset(spec, 6, 4)
    write_dataset(tmp_path, train, test, spec)
    report = validate_dataset(tmp_path)
    assert report.ok and report.num_scenes == 10 and not report.errors
    man, tr, te = load_dataset(tmp_path)
    assert tr == train and te == test
    assert man.activity_names == spec.activity_names()
    assert read_manifest(tmp_path / "manifest.txt") == man


def test_counts_match_independent_recount(tmp_path):
    spec = majority_spec()
    train, test = generate_dataset(spec, 70, 30)
    write_dataset(tmp_path, train, test, spec)
    report = validate_dataset(tmp_path)
    acts = Counter()
    groups = Counter()
    for s in train + test:
        for t in range(s.T):
            groups[int(s.group_labels[t])] += 1
            for p in s.persons:
                if p.action_labels[t] >= 0:
                    acts[int(p.action_labels[t])] += 1
    assert report.activity_counts == {c: groups[c] for c in range(3)}
    assert report.action_counts == {c: acts[c] for c in range(3)}


def test_all_class_two_count(tmp_path):
    spec = majority_spec()
    base = generate_dataset(spec, 3, 1)[0]
    scenes = [Scene(s.persons, np.full(s.T, 2), s.scene_id) for s in base]
    write_dataset(tmp_path, scenes[:2], scenes[2:], spec)
    report = validate_dataset(tmp_path)
    assert report.activity_counts == {0: 0, 1: 0, 2: 3 * spec.timesteps}
    assert any("never occurs" in w for w in report.warnings)


def test_empty_dataset_reports_no_scenes(tmp_path):
    man = DatasetManifest(2, 2, ["a", "b"], ["x", "y"], 3, [])
    (tmp_path / "manifest.txt").write_text(man.to_text())
    report = validate_dataset(tmp_path)
    assert not report.ok and report.errors == ["no scenes"]


def test_validation_collects_errors_and_continues(tmp_path):
    spec = majority_spec()
    train, test = generate_dataset(spec, 3, 2)
    write_dataset(tmp_path, train, test, spec)
    raw = (tmp_path / "manifest.txt").read_text()
    head, body = raw.split("\n", 1)
    data = json.loads(body)
    data["obs_dim"] = 5
    data["scenes"].append({"file": "scenes/missing.txt", "split": "train"})
    (tmp_path / "manifest.txt").write_text(head + "\n" + json.dumps(data))
    report = validate_dataset(tmp_path)
    assert sum("obs_dim" in e for e in report.errors) == 5
    assert any("missing.txt" in e for e in report.errors)


def test_label_range_and_person_count_checks(tmp_path):
    spec = majority_spec(persons_per_scene=(2, 2))
    (s,), (other,) = generate_dataset(spec, 1, 1)
    bad = Scene([Tracklet(p.obs, np.full(s.T, -1), p.bbox) for p in s.persons[:1]] + s.persons[1:],
                np.full(s.T, 7), s.scene_id)
    write_dataset(tmp_path, [bad], [other], spec)
    report = validate_dataset(tmp_path, min_persons=2)
    text = " ".join(report.errors)
    assert "group label" in text and "fewer than 2" in text


def test_format_counts():
    out = format_counts(["walk", "queue"], {0: 5, 1: 12}, "Activity")
    assert out.splitlines() == ["Activity  # Instances", "walk      5", "queue     12"]
