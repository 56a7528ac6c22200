"""End-to-end simulated sessions: synth -> filter -> features -> train -> decode -> score."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as mio
from .analysis import RmseReport, TrialScore, compute_rmse
from .errors import DataError, InvalidArgumentError
from .features import BOXCAR_FRAMES, BaselineProfile, estimate_baseline
from .kalman import KalmanModel, OutputStage, train_kalman
from .protocol import (
    KIN_RATE_HZ, REST_GAP_S, Protocol, abba_schedule, build_target_set,
    build_training_set, dofs_for,
)
from .selection import DEFAULT_K, SelectionResult, gram_schmidt_select
from .streaming import StreamingPipeline, StreamResult, extract_features
from .synth import SynthConfig, synth_emg

RMSE_THRESHOLD = 0.10
CONTROL_RATIO = 3.0
TARGET_LEAD_S = REST_GAP_S
TARGET_TAIL_S = 1.0


def derive_seed(seed: int, *tags: int) -> int:
    """Independent, reproducible child seed for a tagged sub-stream."""
    return int(np.random.SeedSequence(seed, spawn_key=tags).generate_state(1, np.uint64)[0])


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("MYODECODE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class TrainedDecoder:
    baseline: BaselineProfile
    selection: SelectionResult
    model: KalmanModel
    features: StreamResult
    train_mask: np.ndarray

    def pipeline(self, output: OutputStage | None = None) -> StreamingPipeline:
        return StreamingPipeline(baseline=self.baseline.means, selection=self.selection,
                                 model=self.model, output=output)


def rest_mask(protocol: Protocol, valid: np.ndarray, guard: int = BOXCAR_FRAMES) -> np.ndarray:
    """Rest frames usable for baseline: valid, and at least ``guard`` frames
    after the end of any movement so the boxcar holds no trial activity."""
    moving = ~protocol.rest
    recent = np.convolve(moving.astype(float), np.ones(guard), mode="full")[: len(moving)] > 0
    return protocol.rest & ~recent & valid


def train_decoder(protocol: Protocol, raw: np.ndarray, selection_k: int = DEFAULT_K,
                  shuffle_seed: int | None = None) -> TrainedDecoder:
    """Feature extraction, baseline, selection and Kalman fit for one training set.

    ``shuffle_seed`` permutes the kinematics against the features (negative
    control); everything else is unchanged.
    """
    feats = extract_features(raw)
    n = min(len(feats.k), protocol.n_frames)
    if n < protocol.n_frames:
        raise DataError(f"raw EMG covers {n} feature ticks, protocol needs {protocol.n_frames}")
    valid = feats.valid[:n]
    rest = rest_mask(protocol, valid)
    baseline = estimate_baseline(feats.features[:n][rest])
    Z = feats.features[:n][valid] - baseline.means
    X = protocol.kinematics[valid]
    if shuffle_seed is not None:
        X = X[np.random.default_rng(shuffle_seed).permutation(len(X))]
    selection = gram_schmidt_select(Z, X, selection_k)
    model = train_kalman(X, Z[:, selection.indices])
    return TrainedDecoder(baseline, selection, model, feats, valid)


@dataclass
class DecodedTrial:
    run: int
    condition: str
    trial: str
    category: str
    target: np.ndarray
    decoded: np.ndarray


def decode_target_trial(trained: TrainedDecoder, trial, dofs, cfg: SynthConfig, seed: int) -> DecodedTrial:
    target = trial.trajectory(dofs)
    lead = int(round(TARGET_LEAD_S * KIN_RATE_HZ))
    tail = int(round(TARGET_TAIL_S * KIN_RATE_HZ))
    kin = np.vstack([np.zeros((lead, len(dofs))), target, np.zeros((tail, len(dofs)))])
    raw = synth_emg(kin, cfg.with_seed(seed))
    out = trained.pipeline().run(raw, keep_features=False)
    decoded = out.trajectory[lead: lead + len(target)]
    return DecodedTrial(0, "", trial.name, trial.category, target, decoded)


def run_target_task(trained: TrainedDecoder, dof_count: int, cfg: SynthConfig, seed: int,
                    conditions=("",)) -> tuple[RmseReport, list[DecodedTrial]]:
    """Run the nine-trial target set once per condition label, in order.

    In simulation the condition is a label only; each run gets fresh noise.
    """
    dofs = dofs_for(dof_count)
    jobs = [(run, cond, i, trial)
            for run, cond in enumerate(conditions)
            for i, trial in enumerate(build_target_set())]

    def work(job):
        run, cond, i, trial = job
        d = decode_target_trial(trained, trial, dofs, cfg, derive_seed(seed, 1, run, i))
        d.run, d.condition = run, cond
        return d

    with ThreadPoolExecutor(max_workers=max_threads()) as pool:
        decoded = list(pool.map(work, jobs))
    scores = [TrialScore(d.trial, d.category, compute_rmse(d.decoded, d.target), d.run, d.condition)
              for d in decoded]
    return RmseReport.from_trials(scores), decoded


def per_dof_rmse(decoded: list[DecodedTrial]) -> np.ndarray:
    err = np.vstack([d.decoded - d.target for d in decoded])
    return np.sqrt(np.mean(err**2, axis=0))


@dataclass
class SessionRecord:
    dof_count: int
    seed: int
    cfg: SynthConfig
    training: Protocol
    raw: np.ndarray
    trained: TrainedDecoder
    report: RmseReport
    decoded: list
    control: RmseReport | None = None
    manifest: dict = field(default_factory=dict)

    @property
    def mean_rmse(self) -> float:
        return float(np.mean([t.rmse for t in self.report.per_trial]))

    @property
    def per_dof_rmse(self) -> np.ndarray:
        return per_dof_rmse(self.decoded)


def session_manifest(protocol: Protocol, cfg: SynthConfig, dof_count: int, seed: int,
                     selection_k: int, **extra) -> dict:
    entries = {
        "version": __version__,
        "seed": seed,
        "dof_count": dof_count,
        "selection_k": selection_k,
        "config_hash": cfg.digest(dof_count),
        "synth_baseline_uV": cfg.baseline_uV,
        "synth_gain_uV": cfg.gain_uV,
        "synth_noise_band_hz": f"{cfg.noise_band_hz[0]}-{cfg.noise_band_hz[1]}",
        "synth_seed": cfg.seed,
        "rmse_threshold": RMSE_THRESHOLD,
        "n_frames": protocol.n_frames,
        "dofs": ",".join(d.value for d in protocol.dofs),
    }
    entries.update(protocol.meta)
    entries.update(extra)
    return entries


def simulate_session(dof_count: int = 3, selection_k: int = DEFAULT_K, cfg: SynthConfig | None = None,
                     seed: int = 0, first: str = "banded", negative_control: bool = False) -> SessionRecord:
    """Train on a synthetic training set and score the held-out ABBA target task."""
    if dof_count not in (3, 6):
        raise InvalidArgumentError(f"dof_count must be 3 or 6, got {dof_count}")
    cfg = cfg or SynthConfig()
    training = build_training_set(dof_count)
    raw = synth_emg(training.kinematics, cfg.with_seed(derive_seed(seed, 0)))
    trained = train_decoder(training, raw, selection_k)
    schedule = abba_schedule(first)
    report, decoded = run_target_task(trained, dof_count, cfg, seed, schedule.conditions)

    control = None
    if negative_control:
        shuffled = train_decoder(training, raw, selection_k, shuffle_seed=derive_seed(seed, 2))
        control, _ = run_target_task(shuffled, dof_count, cfg, seed, schedule.conditions)

    manifest = session_manifest(training, cfg, dof_count, seed, selection_k,
                                abba=",".join(schedule.conditions))
    record = SessionRecord(dof_count, seed, cfg, training, raw, trained, report, decoded, control, manifest)
    manifest["mean_rmse"] = f"{record.mean_rmse:.6f}"
    if control is not None:
        manifest["control_mean_rmse"] = f"{np.mean([t.rmse for t in control.per_trial]):.6f}"
    return record


def save_session(record: SessionRecord, out_dir) -> Path:
    """Write a session directory: raw, kinematics, features, model, decoded, report, manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tr = record.training
    names = [d.value for d in tr.dofs]
    mio.write_raw_csv(out / "raw.csv", record.raw)
    mio.write_kinematics_csv(out / "kinematics.csv", tr.kinematics, names, tr.rest)
    feats = record.trained.features
    mio.write_features_csv(out / "features.csv", feats.k[feats.valid], feats.features[feats.valid], False)
    mio.write_baseline_csv(out / "baseline.csv", record.trained.baseline.means, record.trained.baseline.n_frames)
    mio.write_selection_csv(out / "selection.csv", record.trained.selection)
    mio.write_model(out / "model.bin", record.trained.model)
    mio.write_model_csv(out / "model.csv", record.trained.model)
    write_decoded_csv(out / "decoded.csv", record.decoded, names)
    mio.write_report_csv(out / "report.csv", record.report)
    mio.write_manifest(out / "manifest", record.manifest)
    return out


def write_decoded_csv(path, decoded: list[DecodedTrial], dof_names):
    header = ["run", "condition", "trial", "k"] + [f"target_{n}" for n in dof_names] + \
             [f"decoded_{n}" for n in dof_names]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for d in decoded:
            for k in range(len(d.target)):
                vals = ",".join(f"{v:.6f}" for v in np.concatenate([d.target[k], d.decoded[k]]))
                fh.write(f"{d.run},{d.condition},{d.trial},{k},{vals}\n")
