"""Command-line front end.

Exit codes: 0 success, 1 usage, 2 data, 3 numerical.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import io as mio
from .analysis import CATEGORIES, bbt_score, condition_compare
from .errors import DataError, MyoDecodeError
from .features import BaselineProfile
from .protocol import CONDITIONS, abba_schedule, build_training_set
from .selection import DEFAULT_K
from .session import (
    TrainedDecoder, derive_seed, run_target_task, save_session, session_manifest,
    simulate_session, train_decoder, write_decoded_csv,
)
from .streaming import StreamResult
from .synth import SynthConfig, synth_emg

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

# config-file keys accepted in addition to the flag names
CONFIG_KEYS = {"seed", "dof", "k", "out", "abba", "variant", "blocks", "elapsed", "condition",
               "format", "baseline_uV", "gain_uV"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _synth_config(args) -> SynthConfig:
    return SynthConfig(baseline_uV=float(args.baseline_uV), gain_uV=float(args.gain_uV), seed=0)


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _synth_config(args)
    protocol = build_training_set(args.dof)
    raw = synth_emg(protocol.kinematics, cfg.with_seed(derive_seed(args.seed, 0)))
    if args.format == "bin":
        mio.write_raw_bin(out / "raw.bin", raw)
    else:
        mio.write_raw_csv(out / "raw.csv", raw)
    mio.write_kinematics_csv(out / "kinematics.csv", protocol.kinematics,
                             [d.value for d in protocol.dofs], protocol.rest)
    manifest = session_manifest(protocol, cfg, args.dof, args.seed, args.k,
                                condition=args.condition, raw_format=args.format)
    mio.write_manifest(out / "manifest", manifest)
    print(f"wrote {protocol.name} session ({protocol.n_frames} frames, {len(raw)} samples) to {out}")
    return EXIT_OK


def _load_session(session: Path) -> tuple[dict, object, np.ndarray]:
    manifest_path = session / "manifest"
    if not manifest_path.exists():
        raise DataError(f"{manifest_path}: session manifest missing")
    manifest = mio.read_manifest(manifest_path)
    dof = int(manifest["dof_count"])
    protocol = build_training_set(dof)
    names, kin, rest = mio.read_kinematics_csv(session / "kinematics.csv")
    if kin.shape != protocol.kinematics.shape or not np.allclose(kin, protocol.kinematics, atol=1e-8):
        raise DataError(f"{session / 'kinematics.csv'}: does not match the {protocol.name} protocol")
    raw_path = session / ("raw.bin" if manifest.get("raw_format") == "bin" else "raw.csv")
    _, raw = mio.read_raw(raw_path)
    return manifest, protocol, raw


def cmd_train(args) -> int:
    session = Path(args.session)
    manifest, protocol, raw = _load_session(session)
    k = args.k if args.k is not None else int(manifest.get("selection_k", DEFAULT_K))
    trained = train_decoder(protocol, raw, k)
    out = Path(args.out) if args.out else session
    out.mkdir(parents=True, exist_ok=True)
    mio.write_model(out / "model.bin", trained.model)
    mio.write_model_csv(out / "model.csv", trained.model)
    mio.write_selection_csv(out / "selection.csv", trained.selection)
    mio.write_baseline_csv(out / "baseline.csv", trained.baseline.means, trained.baseline.n_frames)
    f = trained.features
    mio.write_features_csv(out / "features.csv", f.k[f.valid], f.features[f.valid], False)
    manifest["model_hash"] = _sha(out / "model.bin")[:16]
    manifest["selection_k"] = k
    mio.write_manifest(out / "manifest", manifest)
    print(f"selected {k} features; explained kinematic variance {trained.selection.score_per_step[-1]:.4f}")
    print(f"model hash {manifest['model_hash']}")
    return EXIT_OK


def cmd_task(args) -> int:
    session = Path(args.session)
    manifest = mio.read_manifest(session / "manifest")
    dof = int(manifest["dof_count"])
    model = mio.read_model(session / "model.bin")
    selection = mio.read_selection_csv(session / "selection.csv")
    means, n_frames = mio.read_baseline_csv(session / "baseline.csv")
    cfg = SynthConfig(baseline_uV=float(manifest["synth_baseline_uV"]),
                      gain_uV=float(manifest["synth_gain_uV"]))
    if cfg.digest(dof) != manifest.get("config_hash"):
        raise DataError(f"{session / 'manifest'}: config hash does not match the synth settings")
    trained = TrainedDecoder(BaselineProfile(means, n_frames), selection, model,
                             StreamResult(*(np.zeros(0),) * 4), np.zeros(0, dtype=bool))
    seed = args.seed if args.seed is not None else int(manifest["seed"])
    schedule = abba_schedule(args.abba) if args.abba else None
    conditions = schedule.conditions if schedule else (manifest.get("condition", ""),)
    report, decoded = run_target_task(trained, dof, cfg, seed, conditions)
    out = Path(args.out) if args.out else session
    out.mkdir(parents=True, exist_ok=True)
    mio.write_report_csv(out / "report.csv", report)
    write_decoded_csv(out / "decoded.csv", decoded, manifest["dofs"].split(","))
    if schedule is not None:
        print("runs: " + ",".join(schedule.conditions))
    for cat, (mean, sd) in report.per_category.items():
        print(f"{cat:12s} RMSE {mean:.4f} ± {sd:.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _synth_config(args)
    record = simulate_session(args.dof, args.k, cfg, args.seed, first=args.abba or "banded",
                              negative_control=args.control)
    out = save_session(record, args.out)
    for cat, (mean, sd) in record.report.per_category.items():
        print(f"{cat:12s} RMSE {mean:.4f} ± {sd:.4f}")
    if record.control is not None:
        print(f"negative control mean RMSE {record.manifest['control_mean_rmse']}")
    print(f"session written to {out}")
    return EXIT_OK


def _category_means(paths, condition=None):
    per_cat = {c: [] for c in CATEGORIES}
    for p in paths:
        means = mio.read_report_csv(p).category_means(condition)
        for c in CATEGORIES:
            if c not in means:
                raise UsageError(f"{p}: no rows for category {c}" + (f" / condition {condition}" if condition else ""))
            per_cat[c].append(means[c])
    return per_cat


def cmd_stats(args) -> int:
    if args.b:
        if len(args.a) != len(args.b):
            raise UsageError(f"unpaired inputs: {len(args.a)} reports for A, {len(args.b)} for B")
        a, b = _category_means(args.a), _category_means(args.b)
        labels = [Path(p).parent.name or Path(p).stem for p in args.a]
    else:
        a, b = _category_means(args.a, CONDITIONS[0]), _category_means(args.a, CONDITIONS[1])
        labels = [Path(p).parent.name or Path(p).stem for p in args.a]
    if len(args.a) < 2:
        raise UsageError("a paired comparison needs at least two participants")
    decisions = condition_compare(a, b, participants=labels, alpha=args.alpha)
    for d in decisions:
        flag = "reject" if d.rejected else "keep"
        drop = f" (dropped {','.join(map(str, d.outliers_dropped))})" if d.outliers_dropped else ""
        print(f"{d.category:12s} t={d.t:+.3f} p={d.p:.4f} adj={d.adjusted_p:.4f} {flag}{drop}")
    if args.out:
        mio.write_decisions_csv(args.out, decisions)
    return EXIT_OK


def cmd_bbt(args) -> int:
    score = bbt_score(args.blocks, args.elapsed, args.variant)
    print(f"{score.score:g}")
    return EXIT_OK


def read_config(path) -> dict:
    entries = mio.read_manifest(path)
    unknown = set(entries) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
    return entries


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="myodecode", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file; flags override its entries")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def synth_opts(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dof", type=int, choices=(3, 6), default=3)
        p.add_argument("--k", type=int, default=DEFAULT_K)
        p.add_argument("--baseline-uV", dest="baseline_uV", type=float, default=SynthConfig.baseline_uV)
        p.add_argument("--gain-uV", dest="gain_uV", type=float, default=SynthConfig.gain_uV)

    p = sub.add_parser("synth", help="generate a synthetic training session")
    synth_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--condition", choices=CONDITIONS, default="free")
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="select features and fit the Kalman decoder")
    p.add_argument("session")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("task", help="run the target-matching task with a trained model")
    p.add_argument("session")
    p.add_argument("--abba", choices=CONDITIONS)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_task)

    p = sub.add_parser("simulate", help="synth + train + ABBA task in one go")
    synth_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--abba", choices=CONDITIONS, default="banded")
    p.add_argument("--control", action="store_true", help="also run the shuffled-pairing control")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="compare conditions across participants' reports")
    p.add_argument("--a", nargs="+", required=True, help="reports for condition A (one per participant)")
    p.add_argument("--b", nargs="+", help="reports for condition B; omitted: banded vs free within --a")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bbt", help="score a Box and Block Test run")
    p.add_argument("--variant", choices=("original", "modified"), default="original")
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--elapsed", type=float, default=60.0)
    p.set_defaults(func=cmd_bbt)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    entries = read_config(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subparsers.choices.values():
        dests = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, value in entries.items():
            if key in dests:
                action = dests[key]
                defaults[key] = action.type(value) if action.type else value
                action.required = False
        sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"myodecode: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MyoDecodeError as exc:
        print(f"myodecode: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError) as exc:
        print(f"myodecode: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
