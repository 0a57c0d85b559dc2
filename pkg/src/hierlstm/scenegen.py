"""Synthetic multi-person scenes with known group-activity rules.

Each person performs one action for the whole clip. An action is a Markov
chain over a small set of emission modes (fixed unit vectors); a person's
observation at time ``t`` is the current mode's vector plus isotropic
Gaussian noise. Transition matrices are permutation matrices blended with a
little uniform noise, which keeps them doubly stochastic: started from the
uniform distribution, every frame has the same mode marginal.

With ``marginal_matched`` every action shares one set of modes and only the
transition structure differs, so a single frame carries no information about
the action and only temporal order does.

Group label rules:

``majority``
    the most common action (lowest index on ties).
``key_person``
    one person performs a salient action ``1..n``, everybody else performs a
    background action; the label is the salient action.
``left_right``
    like ``key_person`` but people stand in two halves of the court
    (x < 0.5 or x >= 0.5) and the label also encodes the key person's side.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .numcore import DTYPE, DomainError, child_rng, make_rng

RULES = ("majority", "key_person", "left_right")


class ConfigError(ValueError):
    pass


@dataclass
class Tracklet:
    obs: np.ndarray  # (T, obs_dim)
    action_labels: np.ndarray  # (T,), -1 marks frames where the person is absent
    bbox: np.ndarray  # (T, 2) top-left (x, y)

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=DTYPE)
        self.action_labels = np.asarray(self.action_labels, dtype=np.int64)
        self.bbox = np.asarray(self.bbox, dtype=DTYPE)
        T = self.obs.shape[0]
        if self.obs.ndim != 2 or self.action_labels.shape != (T,) or self.bbox.shape != (T, 2):
            raise DomainError(
                f"tracklet arrays disagree: obs {self.obs.shape}, labels {self.action_labels.shape}, "
                f"bbox {self.bbox.shape}"
            )

    def __eq__(self, other):
        if not isinstance(other, Tracklet):
            return NotImplemented
        return (
            np.array_equal(self.obs, other.obs)
            and np.array_equal(self.action_labels, other.action_labels)
            and np.array_equal(self.bbox, other.bbox)
        )


@dataclass(eq=False)
class Scene:
    persons: list
    group_labels: np.ndarray  # (T,)
    scene_id: int = 0

    def __post_init__(self):
        self.group_labels = np.asarray(self.group_labels, dtype=np.int64)
        if not self.persons:
            raise DomainError("a scene needs at least one person")
        T = self.group_labels.shape[0]
        dims = {p.obs.shape[1] for p in self.persons}
        if any(p.obs.shape[0] != T for p in self.persons) or len(dims) != 1:
            raise DomainError(f"scene {self.scene_id}: tracklets must share length {T} and obs dim")

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and np.array_equal(self.group_labels, other.group_labels)
            and len(self.persons) == len(other.persons)
            and all(a == b for a, b in zip(self.persons, other.persons))
        )

    @property
    def T(self):
        return self.group_labels.shape[0]

    @property
    def K(self):
        return len(self.persons)

    @property
    def obs_dim(self):
        return self.persons[0].obs.shape[1]

    def obs(self):
        """``(T, K, obs_dim)``"""
        return np.stack([p.obs for p in self.persons], axis=1)

    def actions(self):
        """``(T, K)``"""
        return np.stack([p.action_labels for p in self.persons], axis=1)

    def bbox(self):
        """``(T, K, 2)``"""
        return np.stack([p.bbox for p in self.persons], axis=1)

    def present(self):
        return self.actions() >= 0


@dataclass
class TaskSpec:
    rule: str = "majority"
    num_actions: int = 4
    num_activities: int = 4
    persons_per_scene: tuple = (4, 4)
    timesteps: int = 10
    obs_dim: int = 8
    num_modes: int = 4
    transition_noise: float = 0.1
    noise_sigma: float = 0.1
    marginal_matched: bool = False
    seed: int = 0

    def __post_init__(self):
        self.persons_per_scene = tuple(int(v) for v in self.persons_per_scene)
        self.validate()

    def validate(self):
        if self.rule not in RULES:
            raise ConfigError(f"rule must be one of {RULES}, got {self.rule!r}")
        lo, hi = self.persons_per_scene
        if not 1 <= lo <= hi:
            raise ConfigError(f"persons_per_scene must satisfy 1 <= min <= max, got {(lo, hi)}")
        for name in ("num_actions", "num_activities", "timesteps", "obs_dim", "num_modes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.noise_sigma < 0 or not 0 <= self.transition_noise <= 1:
            raise ConfigError("noise_sigma must be >= 0 and transition_noise in [0, 1]")
        if self.rule == "majority" and self.num_activities != self.num_actions:
            raise ConfigError("majority rule needs num_activities == num_actions")
        if self.rule == "left_right":
            if self.num_activities % 2:
                raise ConfigError("left_right needs an even number of activities (left/right variants)")
            if lo % 2 or hi % 2:
                raise ConfigError("left_right needs an even person count so both sides are filled")
        if self.rule in ("key_person", "left_right") and self.num_actions < self.num_salient + 1:
            raise ConfigError(
                f"{self.rule} needs at least {self.num_salient + 1} actions "
                f"({self.num_salient} salient + background), got {self.num_actions}"
            )
        if self.marginal_matched:
            if self.num_modes < 2:
                raise ConfigError("marginal_matched needs at least 2 emission modes")
            if _factorial(self.num_modes) < self.num_actions:
                raise ConfigError(
                    f"marginal_matched: {self.num_modes} modes give only {_factorial(self.num_modes)} "
                    f"distinct dynamics for {self.num_actions} actions"
                )
            if self.transition_noise >= 1:
                raise ConfigError("marginal_matched needs transition_noise < 1 so dynamics differ")

    @property
    def num_salient(self):
        if self.rule == "left_right":
            return self.num_activities // 2
        return self.num_activities

    @property
    def spatial_groups(self):
        """Number of spatial sub-groups the labels depend on."""
        return 2 if self.rule == "left_right" else 1

    def action_names(self):
        if self.rule == "majority":
            return [f"action{a}" for a in range(self.num_actions)]
        names = ["idle"] + [f"salient{a}" for a in range(1, self.num_salient + 1)]
        return names + [f"background{a}" for a in range(self.num_salient + 1, self.num_actions)]

    def activity_names(self):
        if self.rule == "majority":
            return [f"mostly_action{a}" for a in range(self.num_actions)]
        base = [f"salient{a}" for a in range(1, self.num_salient + 1)]
        if self.rule == "key_person":
            return base
        return [f"left_{b}" for b in base] + [f"right_{b}" for b in base]

    @cached_property
    def dynamics(self):
        return ActionDynamics.from_spec(self)


def _factorial(n):
    out = 1
    for v in range(2, n + 1):
        out *= v
    return out


@dataclass
class ActionDynamics:
    modes: np.ndarray  # (A, M, obs_dim) emission vectors
    trans: np.ndarray  # (A, M, M) row-stochastic
    init: np.ndarray  # (A, M)

    @classmethod
    def from_spec(cls, spec):
        rng = child_rng(spec.seed, 0xD7)
        A, M, O = spec.num_actions, spec.num_modes, spec.obs_dim

        def unit(n):
            v = rng.standard_normal((n, O))
            return v / np.linalg.norm(v, axis=-1, keepdims=True)

        if spec.marginal_matched:
            modes = np.broadcast_to(unit(M), (A, M, O)).copy()
        else:
            modes = np.stack([unit(M) for _ in range(A)])
        eps = spec.transition_noise
        trans = np.empty((A, M, M))
        seen = set()
        for a in range(A):
            perm = tuple(rng.permutation(M))
            # shared modes need distinct dynamics; with private modes repeats are harmless
            while spec.marginal_matched and perm in seen:
                perm = tuple(rng.permutation(M))
            seen.add(perm)
            trans[a] = (1.0 - eps) * np.eye(M)[list(perm)] + eps / M
        init = np.full((A, M), 1.0 / M)
        return cls(modes, trans, init)

    def sample(self, action, T, rng):
        """Mode index sequence of length ``T`` for one person."""
        M = self.init.shape[1]
        seq = np.empty(T, dtype=np.int64)
        seq[0] = rng.choice(M, p=self.init[action])
        for t in range(1, T):
            seq[t] = rng.choice(M, p=self.trans[action, seq[t - 1]])
        return seq


def majority_label(actions):
    return int(np.argmax(np.bincount(np.asarray(actions), minlength=1)))


def _person_count(spec, rng):
    lo, hi = spec.persons_per_scene
    if spec.rule == "left_right":
        return 2 * int(rng.integers(lo // 2, hi // 2 + 1))
    return int(rng.integers(lo, hi + 1))


def _sample_actions(spec, K, rng, activity=None):
    """Per-person actions, the key person's slot (or -1) and the group label.

    ``activity`` fixes the group label for the salient-person rules; the key
    person is then drawn from the matching side.
    """
    if spec.rule == "majority":
        actions = rng.integers(0, spec.num_actions, size=K)
        return actions, -1, majority_label(actions)
    n = spec.num_salient
    background = np.array([0] + list(range(n + 1, spec.num_actions)))
    actions = background[rng.integers(0, len(background), size=K)]
    if activity is None:
        key = int(rng.integers(0, K))
        actions[key] = int(rng.integers(1, n + 1))
    elif spec.rule == "left_right":
        half = K // 2
        key = half * (activity // n) + int(rng.integers(0, half))
        actions[key] = activity % n + 1
    else:
        key = int(rng.integers(0, K))
        actions[key] = activity + 1
    return actions, key, int(actions[key]) - 1


def generate_scene(spec, rng, scene_id=0, activity=None):
    """One scene; ``activity`` pins the group label (ignored by the majority rule)."""
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(rng)
    spec.validate()
    if activity is not None and not 0 <= activity < spec.num_activities:
        raise DomainError(f"activity must be in [0, {spec.num_activities}), got {activity}")
    T, O = spec.timesteps, spec.obs_dim
    K = _person_count(spec, rng)
    actions, key, label = _sample_actions(spec, K, rng, None if spec.rule == "majority" else activity)
    xy = rng.uniform(0.0, 1.0, size=(K, 2))
    if spec.rule == "left_right":
        half = K // 2
        xy[:half, 0] *= 0.5
        xy[half:, 0] = 0.5 + 0.5 * xy[half:, 0]
        if xy[key, 0] >= 0.5:
            label += spec.num_salient
    dyn = spec.dynamics
    persons = []
    for k in range(K):
        a = int(actions[k])
        seq = dyn.sample(a, T, rng)
        obs = dyn.modes[a, seq]
        if spec.noise_sigma > 0:
            obs = obs + spec.noise_sigma * rng.standard_normal((T, O))
        persons.append(Tracklet(obs, np.full(T, a), np.broadcast_to(xy[k], (T, 2))))
    # slot order carries no information; the canonical order comes from bboxes
    perm = rng.permutation(K)
    persons = [persons[j] for j in perm]
    return Scene(persons, np.full(T, label), scene_id)


def generate_dataset(spec, n_train, n_test, rng=None):
    """Train and test scenes with ids ``0..n_train-1`` and ``n_train..``.

    Scene ``i`` is drawn from its own stream derived from ``(seed, i)``; the
    seed is ``spec.seed`` unless ``rng`` (a seed or a generator) is given.
    For the salient-person rules each split gets a shuffled, balanced label
    sequence, so class counts differ by at most one and a label-blind
    predictor scores chance exactly.
    """
    if n_train < 1 or n_test < 1:
        raise DomainError("n_train and n_test must both be >= 1")
    if rng is None:
        seed = spec.seed
    elif isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, 2**63))
    else:
        seed = int(rng)
    labels = [None] * (n_train + n_test)
    if spec.rule != "majority":
        C = spec.num_activities
        labels = [int(a) for split, n in enumerate((n_train, n_test))
                  for a in child_rng(seed, 2, split).permutation(np.arange(n) % C)]
    scenes = [generate_scene(spec, child_rng(seed, 1, i), scene_id=i, activity=labels[i])
              for i in range(n_train + n_test)]
    return scenes[:n_train], scenes[n_train:]


def rederive_label(spec, scene):
    """Group label recomputed from the stored per-person actions and positions."""
    actions = scene.actions()[0]
    if spec.rule == "majority":
        counts = {}
        for a in actions:
            counts[int(a)] = counts.get(int(a), 0) + 1
        best = max(counts.values())
        return min(a for a, c in counts.items() if c == best)
    salient = [k for k, a in enumerate(actions) if 1 <= a <= spec.num_salient]
    if len(salient) != 1:
        raise DomainError(f"scene {scene.scene_id} has {len(salient)} salient people")
    k = salient[0]
    label = int(actions[k]) - 1
    if spec.rule == "left_right" and scene.persons[k].bbox[0, 0] >= 0.5:
        label += spec.num_salient
    return label

