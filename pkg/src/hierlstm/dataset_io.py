"""Plain-text scene files, the dataset manifest, and dataset validation.

Scene file (one per scene)::

    HIERLSTM-SCENE 1
    <scene_id> <T> <K> <obs_dim> <group label for t=1..T>
    then for each of the K people:
      <action label for t=1..T>            (-1: person absent at t)
      <x_1> <y_1> ... <x_T> <y_T>          (top-left bbox corner per frame)
      T lines of obs_dim reals

Reals are written with 17 significant digits, which round-trips every
finite float64 exactly.

Manifest (``manifest.txt``): a ``HIERLSTM-MANIFEST 1`` line followed by a
JSON object with ``num_actions``, ``num_activities``, ``action_names``,
``activity_names``, ``obs_dim``, ``scenes`` (list of ``{"file", "split"}``)
and optionally ``task`` (the generating task parameters).
"""

from collections import Counter
from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np

from .scenegen import Scene, Tracklet

SCENE_MAGIC = "HIERLSTM-SCENE"
MANIFEST_MAGIC = "HIERLSTM-MANIFEST"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.txt"


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {msg}")


class ValidationError(ValueError):
    pass


def _real(v):
    return "%.17g" % v


def scene_to_text(scene):
    T, K, O = scene.T, scene.K, scene.obs_dim
    lines = [f"{SCENE_MAGIC} {FORMAT_VERSION}",
             " ".join(str(v) for v in [scene.scene_id, T, K, O, *scene.group_labels.tolist()])]
    for p in scene.persons:
        lines.append(" ".join(str(int(a)) for a in p.action_labels))
        lines.append(" ".join(_real(v) for v in p.bbox.reshape(-1)))
        lines.extend(" ".join(_real(v) for v in row) for row in p.obs)
    return "\n".join(lines) + "\n"


def scene_from_text(text, path="<string>"):
    lines = text.splitlines()
    pos = 0

    def take(expect):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(path, pos + 1, f"unexpected end of file, expected {expect}")
        pos += 1
        return pos, lines[pos - 1].split()

    def nums(lineno, toks, n, kind, what):
        if len(toks) != n:
            raise ParseError(path, lineno, f"expected {n} values for {what}, found {len(toks)}")
        try:
            return [kind(t) for t in toks]
        except ValueError:
            raise ParseError(path, lineno, f"malformed number in {what}") from None

    ln, toks = take("magic line")
    if len(toks) != 2 or toks[0] != SCENE_MAGIC:
        raise ParseError(path, ln, f"missing {SCENE_MAGIC} magic line")
    if toks[1] != str(FORMAT_VERSION):
        raise ParseError(path, ln, f"unsupported scene format version {toks[1]}")
    ln, toks = take("header")
    if len(toks) < 4:
        raise ParseError(path, ln, "header needs scene_id, T, K, obs_dim")
    scene_id, T, K, O = nums(ln, toks[:4], 4, int, "header")
    if T < 1 or K < 1 or O < 1:
        raise ParseError(path, ln, f"T, K and obs_dim must be positive, got {T}, {K}, {O}")
    group = nums(ln, toks[4:], T, int, "group labels")
    persons = []
    for k in range(K):
        ln, toks = take(f"action labels of person {k + 1}")
        acts = nums(ln, toks, T, int, f"action labels of person {k + 1}")
        ln, toks = take(f"bbox keys of person {k + 1}")
        bbox = nums(ln, toks, 2 * T, float, f"bbox keys of person {k + 1}")
        obs = []
        for t in range(T):
            ln, toks = take(f"observation {t + 1} of person {k + 1}")
            obs.append(nums(ln, toks, O, float, f"observation {t + 1} of person {k + 1}"))
        persons.append(Tracklet(np.array(obs), np.array(acts), np.array(bbox).reshape(T, 2)))
    if any(line.strip() for line in lines[pos:]):
        raise ParseError(path, pos + 1, "trailing content after the last person block")
    return Scene(persons, np.array(group), scene_id)


def write_scene(scene, path):
    Path(path).write_text(scene_to_text(scene))


def read_scene(path):
    return scene_from_text(Path(path).read_text(), path)


@dataclass
class DatasetManifest:
    num_actions: int
    num_activities: int
    action_names: list
    activity_names: list
    obs_dim: int
    scenes: list = field(default_factory=list)  # [{"file": ..., "split": "train"|"test"}]
    task: dict = None
    format_version: int = FORMAT_VERSION

    def files(self, split=None):
        return [s["file"] for s in self.scenes if split is None or s["split"] == split]

    def to_text(self):
        body = {k: v for k, v in self.__dict__.items() if k != "format_version"}
        return f"{MANIFEST_MAGIC} {self.format_version}\n" + json.dumps(body, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_text(cls, text, path="<string>"):
        first, _, body = text.partition("\n")
        toks = first.split()
        if len(toks) != 2 or toks[0] != MANIFEST_MAGIC:
            raise ParseError(path, 1, f"missing {MANIFEST_MAGIC} magic line")
        if toks[1] != str(FORMAT_VERSION):
            raise ParseError(path, 1, f"unsupported manifest version {toks[1]}")
        try:
            data = json.loads(body)
        except json.JSONDecodeError as e:
            raise ParseError(path, e.lineno + 1, f"bad manifest JSON: {e.msg}") from None
        return cls(**data)


def manifest_path(path):
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def read_manifest(path):
    path = manifest_path(path)
    return DatasetManifest.from_text(path.read_text(), path)


def write_dataset(out_dir, train, test, spec):
    """Write scenes and a manifest describing them; returns the manifest path."""
    out = Path(out_dir)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    entries = []
    for split, scenes in (("train", train), ("test", test)):
        for s in scenes:
            name = f"scenes/scene_{s.scene_id:06d}.txt"
            write_scene(s, out / name)
            entries.append({"file": name, "split": split})
    task = {k: (list(v) if isinstance(v, tuple) else v) for k, v in spec.__dict__.items() if k != "dynamics"}
    man = DatasetManifest(spec.num_actions, spec.num_activities, spec.action_names(),
                          spec.activity_names(), spec.obs_dim, entries, task)
    path = out / MANIFEST_NAME
    path.write_text(man.to_text())
    return path


def load_dataset(path):
    """``(manifest, train_scenes, test_scenes)`` from a manifest or its directory."""
    mpath = manifest_path(path)
    man = read_manifest(mpath)
    root = mpath.parent
    train = [read_scene(root / f) for f in man.files("train")]
    test = [read_scene(root / f) for f in man.files("test")]
    return man, train, test


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    activity_counts: dict = field(default_factory=dict)  # class -> scene-frames
    action_counts: dict = field(default_factory=dict)  # class -> person-frames
    num_scenes: int = 0

    @property
    def ok(self):
        return not self.errors


def check_scene(scene, man, min_persons=1):
    """Problems with one scene relative to the manifest (empty list if none)."""
    problems = []
    if scene.obs_dim != man.obs_dim:
        problems.append(f"obs_dim {scene.obs_dim} != manifest obs_dim {man.obs_dim}")
    g = scene.group_labels
    if g.min() < 0 or g.max() >= man.num_activities:
        problems.append(f"group label outside 0..{man.num_activities - 1}")
    acts = scene.actions()
    if acts.min() < -1 or acts.max() >= man.num_actions:
        problems.append(f"action label outside -1..{man.num_actions - 1}")
    counts = (acts >= 0).sum(axis=1)
    if counts.min() < min_persons:
        problems.append(f"frame {int(counts.argmin())} has {int(counts.min())} people, fewer than {min_persons}")
    if not all(np.all(np.isfinite(p.obs)) and np.all(np.isfinite(p.bbox)) for p in scene.persons):
        problems.append("non-finite observation or bbox value")
    return problems


def validate_dataset(path, min_persons=1):
    """Check every listed scene and count labels.

    Activities are counted once per scene-frame, actions once per
    person-frame (absent frames excluded). Failures are collected in the
    report; validation continues past them.
    """
    report = ValidationReport()
    mpath = manifest_path(path)
    try:
        man = read_manifest(mpath)
    except (OSError, ParseError, TypeError) as e:
        report.errors.append(f"manifest: {e}")
        return report
    if len(set(man.action_names)) != len(man.action_names) or len(man.action_names) != man.num_actions:
        report.errors.append("action names must be unique and match num_actions")
    if len(set(man.activity_names)) != len(man.activity_names) or len(man.activity_names) != man.num_activities:
        report.errors.append("activity names must be unique and match num_activities")
    if not man.scenes:
        report.errors.append("no scenes")
        return report
    act_counts = Counter()
    grp_counts = Counter()
    lengths = set()
    for entry in man.scenes:
        if entry.get("split") not in ("train", "test"):
            report.errors.append(f"{entry.get('file')}: split must be 'train' or 'test'")
        try:
            scene = read_scene(mpath.parent / entry["file"])
        except (OSError, ParseError, ValueError) as e:
            report.errors.append(f"{entry.get('file')}: {e}")
            continue
        problems = check_scene(scene, man, min_persons)
        report.errors.extend(f"{entry['file']}: {p}" for p in problems)
        if problems:
            continue
        report.num_scenes += 1
        lengths.add(scene.T)
        grp_counts.update(scene.group_labels.tolist())
        acts = scene.actions()
        act_counts.update(acts[acts >= 0].tolist())
    if len(lengths) > 1:
        report.warnings.append(f"scenes have differing frame counts {sorted(lengths)}")
    report.activity_counts = {c: grp_counts.get(c, 0) for c in range(man.num_activities)}
    report.action_counts = {c: act_counts.get(c, 0) for c in range(man.num_actions)}
    for c, n in report.activity_counts.items():
        if n == 0:
            report.warnings.append(f"activity {man.activity_names[c]!r} never occurs")
    return report


def format_counts(names, counts, title):
    """Two-column class/instance table."""
    width = max([len(title)] + [len(n) for n in names])
    lines = [f"{title:<{width}}  # Instances"]
    lines += [f"{names[c]:<{width}}  {counts[c]}" for c in range(len(names))]
    return "\n".join(lines)
