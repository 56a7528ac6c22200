"""Scoring and statistics for decode sessions and functional tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from .errors import IllPosedError, InvalidArgumentError

CATEGORIES = ("digit_only", "digit_wrist", "total")


def compute_rmse(decoded, target) -> float:
    """RMSE pooled over every time step and DOF."""
    decoded = np.asarray(decoded, dtype=float)
    target = np.asarray(target, dtype=float)
    if decoded.shape != target.shape:
        raise InvalidArgumentError(f"decoded {decoded.shape} and target {target.shape} differ")
    if decoded.size == 0:
        raise InvalidArgumentError("cannot score an empty trajectory")
    return float(np.sqrt(np.mean((decoded - target) ** 2)))


@dataclass(frozen=True)
class TrialScore:
    trial: str
    category: str
    rmse: float
    run: int = 0
    condition: str = ""


@dataclass
class RmseReport:
    per_trial: list
    per_category: dict = field(default_factory=dict)

    @classmethod
    def from_trials(cls, trials) -> RmseReport:
        trials = list(trials)
        summary = {}
        for cat in CATEGORIES:
            vals = np.array([t.rmse for t in trials if cat == "total" or t.category == cat])
            if len(vals):
                sd = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
                summary[cat] = (float(vals.mean()), sd)
        return cls(trials, summary)

    def category_means(self, condition: str | None = None) -> dict:
        """Mean RMSE per category, optionally restricted to one condition label."""
        rows = [t for t in self.per_trial if condition is None or t.condition == condition]
        out = {}
        for cat in CATEGORIES:
            vals = [t.rmse for t in rows if cat == "total" or t.category == cat]
            if vals:
                out[cat] = float(np.mean(vals))
        return out


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    n: int
    degenerate: bool = False  # zero-variance differences with nonzero mean


def paired_ttest(a, b) -> TTestResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError("paired samples must be 1-D and equally long")
    n = len(a)
    if n < 2:
        raise IllPosedError("paired t-test needs at least two pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0:
        if mean == 0:
            return TTestResult(0.0, 1.0, n)
        return TTestResult(float(np.copysign(np.inf, mean)), 0.0, n, degenerate=True)
    t = mean / (sd / np.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), df=n - 1)
    return TTestResult(float(t), float(min(p, 1.0)), n)


@dataclass(frozen=True)
class HolmResult:
    rejected: np.ndarray
    adjusted: np.ndarray


def holm_bonferroni(pvals, alpha: float = 0.05, m: int | None = None) -> HolmResult:
    """Holm step-down; ``m`` may exceed the number of p-values supplied.

    Results are reported in input order.
    """
    p = np.asarray(pvals, dtype=float)
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise InvalidArgumentError("p-values must lie in [0, 1]")
    n = len(p)
    m = n if m is None else int(m)
    if m < n:
        raise InvalidArgumentError(f"correction factor {m} smaller than {n} hypotheses")
    order = np.argsort(p, kind="stable")
    factors = m - np.arange(n)
    adjusted_sorted = np.minimum(np.maximum.accumulate(p[order] * factors), 1.0)
    passed = p[order] * factors <= alpha
    # step-down: stop at the first failure
    reject_sorted = np.cumprod(passed).astype(bool)
    rejected = np.empty(n, dtype=bool)
    adjusted = np.empty(n)
    rejected[order] = reject_sorted
    adjusted[order] = adjusted_sorted
    return HolmResult(rejected, adjusted)


def quartiles(values) -> tuple[float, float]:
    """Q1, Q3 by linear interpolation between order statistics."""
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25, 75], method="linear")
    return float(q1), float(q3)


def tukey_outliers(values, k: float = 1.5) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if len(values) < 4:
        raise IllPosedError("Tukey fences need at least four values")
    q1, q3 = quartiles(values)
    iqr = q3 - q1
    return (values < q1 - k * iqr) | (values > q3 + k * iqr)


# -- Box and Block Test ---------------------------------------------------

BBT_DURATION_S = 60.0
MODIFIED_BBT_BLOCKS = 16


@dataclass(frozen=True)
class BlockTestScore:
    variant: str
    blocks_moved: int
    elapsed_s: float
    score: float


def bbt_score(blocks: int, elapsed_s: float = BBT_DURATION_S, variant: str = "original") -> BlockTestScore:
    """Score a Box and Block run; modified-variant completions extrapolate to 60 s."""
    if variant not in ("original", "modified"):
        raise InvalidArgumentError(f"unknown BBT variant {variant!r}")
    if blocks < 0 or int(blocks) != blocks:
        raise InvalidArgumentError(f"block count must be a nonnegative integer, got {blocks}")
    if not 0 < elapsed_s <= BBT_DURATION_S:
        raise InvalidArgumentError(f"elapsed time must be in (0, 60] s, got {elapsed_s}")
    blocks = int(blocks)
    score = float(blocks)
    if variant == "modified":
        if blocks > MODIFIED_BBT_BLOCKS:
            raise InvalidArgumentError(f"modified BBT has only {MODIFIED_BBT_BLOCKS} blocks")
        if blocks == MODIFIED_BBT_BLOCKS:
            score = MODIFIED_BBT_BLOCKS * BBT_DURATION_S / elapsed_s
    return BlockTestScore(variant, blocks, float(elapsed_s), score)


# -- elastic band torque --------------------------------------------------

@dataclass(frozen=True)
class TorqueModel:
    tau_rest_nm: float = 0.34
    tau_max_nm: float = 0.85
    # band geometry, kept for reference only
    band_count: int = 4
    band_diameter_cm: float = 0.8
    elastic_modulus_n_per_mm2: float = 0.4
    elongation_window_mm: tuple = (30.0, 90.0)

    def __post_init__(self):
        if not self.tau_max_nm >= self.tau_rest_nm > 0:
            raise InvalidArgumentError("need tau_max >= tau_rest > 0")


def band_torque(theta_frac: float, model: TorqueModel = TorqueModel()) -> float:
    """Resisting torque (N·m) at a fraction of maximal wrist rotation."""
    if not 0.0 <= theta_frac <= 1.0:
        raise InvalidArgumentError(f"rotation fraction must be in [0, 1], got {theta_frac}")
    if theta_frac == 1.0:
        return model.tau_max_nm
    return model.tau_rest_nm + (model.tau_max_nm - model.tau_rest_nm) * theta_frac


# -- range of motion ------------------------------------------------------

class RomMovement(str, Enum):
    WD = "WD"  # wrist deviation
    WF = "WF"  # wrist flexion
    FR = "FR"  # forearm rotation
    EF = "EF"  # elbow flexion
    SR = "SR"  # shoulder rotation
    SFF = "SFF"  # shoulder frontal flexion
    SHF = "SHF"  # shoulder horizontal flexion


@dataclass(frozen=True)
class RomRecord:
    movement: RomMovement
    measured_deg: tuple  # (mean, sd)
    required_deg: tuple

    def __post_init__(self):
        for mean, sd in (self.measured_deg, self.required_deg):
            if not (np.isfinite(mean) and np.isfinite(sd)) or sd < 0:
                raise InvalidArgumentError(f"bad range-of-motion entry for {self.movement}")


@dataclass(frozen=True)
class RomVerdict:
    movement: RomMovement
    verdict: str  # exceeds | meets | hindered
    deficit_deg: float = 0.0


def rom_compare(records, tol_deg: float = 0.0) -> list[RomVerdict]:
    records = list(records)
    if not records:
        raise InvalidArgumentError("no range-of-motion records to compare")
    out = []
    for r in records:
        diff = r.measured_deg[0] - r.required_deg[0]
        if abs(diff) <= tol_deg:
            out.append(RomVerdict(r.movement, "meets"))
        elif diff > 0:
            out.append(RomVerdict(r.movement, "exceeds"))
        else:
            out.append(RomVerdict(r.movement, "hindered", -diff))
    return out


# -- condition comparison -------------------------------------------------

@dataclass(frozen=True)
class CategoryDecision:
    category: str
    t: float
    p: float
    adjusted_p: float
    rejected: bool
    outliers_dropped: tuple
    degenerate: bool = False


def condition_compare(a: dict, b: dict, participants=None, alpha: float = 0.05,
                      m: int = 3) -> list[CategoryDecision]:
    """Paired per-category comparison of two conditions across participants.

    ``a[cat]`` and ``b[cat]`` hold one value per participant in the same
    order. Participants whose paired difference is a Tukey outlier are
    dropped for that category only, then Holm-correct across categories.
    """
    cats = [c for c in CATEGORIES if c in a or c in b]
    if not cats:
        raise InvalidArgumentError("no categories to compare")
    tests, dropped = [], []
    for cat in cats:
        if cat not in a or cat not in b:
            raise InvalidArgumentError(f"category {cat!r} missing from one condition")
        xa = np.asarray(a[cat], dtype=float)
        xb = np.asarray(b[cat], dtype=float)
        if xa.shape != xb.shape:
            raise InvalidArgumentError(f"unpaired data in category {cat!r}: {len(xa)} vs {len(xb)}")
        ids = list(participants) if participants is not None else list(range(len(xa)))
        if len(ids) != len(xa):
            raise InvalidArgumentError("participant labels do not match the data")
        keep = np.ones(len(xa), dtype=bool)
        if len(xa) >= 4:
            keep = ~tukey_outliers(xa - xb)
        dropped.append(tuple(ids[i] for i in np.flatnonzero(~keep)))
        tests.append(paired_ttest(xa[keep], xb[keep]))
    holm = holm_bonferroni([t.p for t in tests], alpha=alpha, m=max(m, len(tests)))
    return [
        CategoryDecision(cat, t.t, t.p, float(adj), bool(rej), drop, t.degenerate)
        for cat, t, adj, rej, drop in zip(cats, tests, holm.adjusted, holm.rejected, dropped)
    ]
