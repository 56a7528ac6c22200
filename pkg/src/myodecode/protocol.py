"""Preprogrammed kinematic protocols: training sets, target task, ABBA order."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidArgumentError

KIN_RATE_HZ = 30.0
RAMP_S = 0.7
REST_GAP_S = 2.0
TARGET_LEVEL = 0.5


class Dof(str, Enum):
    THUMB_FE = "thumb_fe"
    INDEX_FE = "index_fe"
    MRP_FE = "mrp_fe"
    THUMB_ADAB = "thumb_adab"
    WRIST_PS = "wrist_ps"
    WRIST_FE = "wrist_fe"


DOFS_3 = (Dof.THUMB_FE, Dof.INDEX_FE, Dof.MRP_FE)
DOFS_6 = DOFS_3 + (Dof.THUMB_ADAB, Dof.WRIST_PS, Dof.WRIST_FE)

# per-DOF protocol: (hold seconds, trials per direction)
TRAINING_PROTOCOLS = {3: (5.0, 5), 6: (3.0, 4)}


def dofs_for(dof_count: int) -> tuple[Dof, ...]:
    if dof_count == 3:
        return DOFS_3
    if dof_count == 6:
        return DOFS_6
    raise InvalidArgumentError(f"dof_count must be 3 or 6, got {dof_count}")


@dataclass(frozen=True)
class MovementClass:
    dof: Dof
    direction: int = 1

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise InvalidArgumentError(f"direction must be +1 or -1, got {self.direction}")

    @property
    def label(self) -> str:
        return f"{self.dof.value}{'+' if self.direction > 0 else '-'}"


@dataclass(frozen=True)
class TrapezoidProfile:
    hold_s: float
    amplitude: float = 1.0
    rise_s: float = RAMP_S
    fall_s: float = RAMP_S
    rate_hz: float = KIN_RATE_HZ

    @property
    def duration_s(self) -> float:
        return self.rise_s + self.hold_s + self.fall_s

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.rate_hz))

    def value_at(self, t):
        """Profile value at time(s) ``t`` in seconds from trial onset."""
        t = np.asarray(t, dtype=float)
        a = self.amplitude
        up = a * t / self.rise_s
        down = a * (self.duration_s - t) / self.fall_s
        v = np.where(t < self.rise_s, up, np.where(t <= self.rise_s + self.hold_s, a, down))
        return np.where((t < 0) | (t > self.duration_s), 0.0, v)


def make_trapezoid(profile: TrapezoidProfile) -> np.ndarray:
    """Linear ramp up, hold, linear ramp down, sampled at ``profile.rate_hz``."""
    if min(profile.rise_s, profile.hold_s, profile.fall_s) <= 0 or profile.rate_hz <= 0:
        raise InvalidArgumentError("trapezoid durations and rate must be positive")
    if not 0 < abs(profile.amplitude) <= 1:
        raise InvalidArgumentError(f"amplitude must be in (0, 1] in magnitude, got {profile.amplitude}")
    t = np.arange(profile.n_frames) / profile.rate_hz
    return profile.value_at(t)


@dataclass(frozen=True)
class Segment:
    """A trial placed on a protocol timeline (frame indices, end exclusive)."""

    start: int
    stop: int
    label: str
    category: str = ""


@dataclass
class Protocol:
    """A labeled kinematic timeline at 30 Hz.

    ``rest`` marks frames outside every trial (all-zero kinematics).
    """

    name: str
    dofs: tuple
    kinematics: np.ndarray
    rest: np.ndarray
    segments: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return len(self.kinematics)


def _assemble(name, dofs, trials, gap_frames, meta) -> Protocol:
    """Lay trials out as gap, trial, gap, trial, ..., gap."""
    total = gap_frames * (len(trials) + 1) + sum(len(tr) for _, tr, _ in trials)
    kin = np.zeros((total, len(dofs)))
    rest = np.ones(total, dtype=bool)
    segments = []
    pos = gap_frames
    for label, traj, category in trials:
        kin[pos: pos + len(traj)] = traj
        rest[pos: pos + len(traj)] = False
        segments.append(Segment(pos, pos + len(traj), label, category))
        pos += len(traj) + gap_frames
    return Protocol(name, tuple(dofs), kin, rest, segments, meta)


def build_training_set(dof_count: int, gap_s: float = REST_GAP_S) -> Protocol:
    """Flexion then mirrored extension trials for each DOF, in DOF order."""
    dofs = dofs_for(dof_count)
    hold_s, n_trials = TRAINING_PROTOCOLS[dof_count]
    trials = []
    for d, dof in enumerate(dofs):
        for direction in (1, -1):
            profile = TrapezoidProfile(hold_s=hold_s, amplitude=float(direction))
            traj = np.zeros((profile.n_frames, len(dofs)))
            traj[:, d] = make_trapezoid(profile)
            for rep in range(n_trials):
                trials.append((f"{MovementClass(dof, direction).label}#{rep}", traj, "training"))
    profile = TrapezoidProfile(hold_s=hold_s)
    meta = {
        "protocol": f"training-{dof_count}dof",
        "trial_duration_s": round(profile.duration_s, 6),
        "trial_frames": profile.n_frames,
        "trials_per_direction": n_trials,
        "extension_trials": "mirrored",
        "rest_gap_s": gap_s,
    }
    return _assemble(meta["protocol"], dofs, trials, int(round(gap_s * KIN_RATE_HZ)), meta)


WRIST_ORIENTATIONS = {"neutral": 0, "pronation": 1, "supination": -1}


@dataclass(frozen=True)
class TargetTrial:
    name: str
    movements: tuple  # ((MovementClass, level), ...)
    hold_s: float = 5.0

    @property
    def category(self) -> str:
        return "digit_only" if len(self.movements) == 1 else "digit_wrist"

    def trajectory(self, dofs) -> np.ndarray:
        """Target positions for the trial; DOFs absent from ``dofs`` are dropped."""
        profile = TrapezoidProfile(hold_s=self.hold_s)
        traj = np.zeros((profile.n_frames, len(dofs)))
        for movement, level in self.movements:
            if movement.dof in dofs:
                shape = TrapezoidProfile(hold_s=self.hold_s, amplitude=movement.direction * level)
                traj[:, list(dofs).index(movement.dof)] = make_trapezoid(shape)
        return traj


def build_target_set(level: float = TARGET_LEVEL) -> list[TargetTrial]:
    """Thumb/index/MRP flexion in neutral, pronated and supinated wrist."""
    trials = []
    for digit in DOFS_3:
        for orientation, sign in WRIST_ORIENTATIONS.items():
            movements = [(MovementClass(digit, 1), level)]
            if sign:
                movements.append((MovementClass(Dof.WRIST_PS, sign), level))
            trials.append(TargetTrial(f"{digit.value}/{orientation}", tuple(movements)))
    return trials


CONDITIONS = ("banded", "free")


@dataclass(frozen=True)
class SessionSchedule:
    conditions: tuple
    trains_first: str


def abba_schedule(first: str = "banded", second: str | None = None) -> SessionSchedule:
    if second is None:
        if first not in CONDITIONS:
            raise InvalidArgumentError(f"unknown condition {first!r}")
        second = CONDITIONS[1 - CONDITIONS.index(first)]
    if first == second:
        raise InvalidArgumentError("ABBA needs two distinct conditions")
    return SessionSchedule((first, second, second, first), first)


def training_order(participant: int) -> tuple[str, str]:
    """Banded/free training order, alternated between consecutive participants."""
    return CONDITIONS if participant % 2 == 1 else CONDITIONS[::-1]
