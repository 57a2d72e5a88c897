"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .agent.train import TrainConfig, load_checkpoint, new_network, save_checkpoint, train, write_log
from .bed import DEFAULT_THRESHOLD
from .config import ConfigFileError, build, load_config_file
from .datagen import ConfigError as GeneratorConfigError
from .datagen import GeneratorConfig, generate_kb, sample_patients
from .agent.train import ConfigError as TrainConfigError
from .environment import EnvConfig, dump_trajectories
from .interactive import BedResponder, CasandeResponder, InteractiveSession, save_session
from .knowledge import DataError, load_knowledge_base, load_patients, save_knowledge_base, save_patients
from .metrics import METRIC_NAMES, aggregate, write_report_csv, write_series_csv
from .runner import AGENTS, evaluate_trajectories, run_agent
from .shaping import SchedulerConfig, ShapingConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("casande_lab")


class UsageError(Exception):
    pass


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: Path, command: str, argv, config: dict, seeds, paths: dict, started: str) -> None:
    manifest = {
        "tool": "casande-lab",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "paths": {k: str(v) for k, v in paths.items()},
        "started_at": started,
        "finished_at": _now(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _configs(args, file_cfg: dict):
    T = getattr(args, "T", None)
    env = build(EnvConfig, file_cfg.get("env"), T=T)
    sch = build(SchedulerConfig, file_cfg.get("scheduler"), T=env.T)
    shaping = build(
        ShapingConfig, file_cfg.get("shaping"),
        alpha_ex=getattr(args, "alpha_ex", None), alpha_co=getattr(args, "alpha_co", None),
        alpha_sev=getattr(args, "alpha_sev", None), alpha_cl=getattr(args, "alpha_cl", None),
        w_si=getattr(args, "w_si", None), tau_sev=getattr(args, "threshold", None),
    )
    if getattr(args, "no_shaping", False):
        shaping.alpha_ex = shaping.alpha_co = shaping.alpha_sev = shaping.alpha_cl = 0.0
    return env, sch, shaping


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_generate(args, file_cfg) -> int:
    started = _now()
    cfg = build(
        GeneratorConfig, file_cfg.get("generator"),
        seed=args.seed, num_pathologies=args.diseases, num_evidences=args.evidences,
        severe_fraction=args.severe_fraction, links_per_pathology=args.links,
        kind_mix=tuple(args.kind_mix) if args.kind_mix else None,
    )
    kb = generate_kb(cfg)
    out = _out_dir(args.out)
    paths = {"kb": out / "kb.json", "patients": out / "patients.jsonl"}
    save_knowledge_base(kb, paths["kb"])
    save_patients(sample_patients(kb, args.patients, cfg.seed), kb, paths["patients"])
    if args.test_patients:
        paths["test_patients"] = out / "test_patients.jsonl"
        # test patients come from a separate seed stream
        test = sample_patients(kb, args.test_patients, cfg.seed + 0x9E3779B9)
        save_patients(test, kb, paths["test_patients"])
    write_manifest(out, "generate", args.argv, {"generator": cfg.to_dict(), "patients": args.patients,
                                                   "test_patients": args.test_patients}, [cfg.seed], paths, started)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def cmd_train(args, file_cfg) -> int:
    started = _now()
    kb = load_knowledge_base(args.kb)
    patients = load_patients(args.patients, kb)
    env, sch, shaping = _configs(args, file_cfg)
    tcfg = build(
        TrainConfig, file_cfg.get("train"),
        steps=args.steps, seed=args.seed, lr=args.lr, optimizer=args.optimizer,
        env_count=args.env_count, batch_size=args.batch_size, gamma=None,
    )
    env.gamma = shaping.gamma = tcfg.gamma
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    result = train(kb, patients, env, shaping, tcfg, sch)
    out = _out_dir(args.out)
    configs = {"env": asdict(env), "scheduler": asdict(sch), "shaping": shaping.to_dict(), "train": tcfg.to_dict()}
    paths = {"checkpoint": out / "checkpoint.json", "log": out / "train_log.csv", "kb": args.kb,
             "patients": args.patients}
    save_checkpoint(paths["checkpoint"], result.params, configs, result.rng_state, result.target,
                    result.optimizer_state)
    write_log(result.log, paths["log"])
    write_manifest(out, "train", args.argv, configs, [tcfg.seed], paths, started)
    print(f"wrote {paths['checkpoint']} and {paths['log']}")
    return EXIT_OK


def _parse_seeds(args) -> list[int]:
    seeds = None
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise UsageError(f"--seeds must be a comma-separated list of integers, got {args.seeds!r}") from None
    if seeds is not None and args.runs is not None and args.runs != len(seeds):
        raise UsageError(f"--runs {args.runs} disagrees with {len(seeds)} seeds")
    if seeds is None:
        seeds = list(range(args.runs or 1))
    return seeds


def _parse_metrics(text) -> tuple[str, ...]:
    if not text:
        return METRIC_NAMES
    names = tuple(m.strip() for m in text.split(",") if m.strip())
    unknown = [m for m in names if m not in METRIC_NAMES]
    if unknown:
        raise UsageError(f"unknown metric(s) {unknown}; choose from {list(METRIC_NAMES)}")
    return names


def _params_for(args, seed: int, env: EnvConfig | None = None, file_cfg: dict | None = None):
    """Network for ``seed``; also adopts the checkpoint's horizon when neither flag nor file sets T."""
    if args.agent == "bed":
        return None
    if not args.checkpoint:
        raise UsageError(f"agent {args.agent!r} needs --checkpoint")
    params, doc = load_checkpoint(args.checkpoint.format(seed=seed))
    t_set = getattr(args, "T", None) is not None or "T" in (file_cfg or {}).get("env", {})
    trained_T = (doc.get("configs") or {}).get("env", {}).get("T")
    if env is not None and not t_set and trained_T:
        env.T = int(trained_T)
    return params


def cmd_evaluate(args, file_cfg) -> int:
    started = _now()
    metrics = _parse_metrics(args.metrics)
    seeds = _parse_seeds(args)
    kb = load_knowledge_base(args.kb)
    patients = load_patients(args.patients, kb)
    env, _, shaping = _configs(args, file_cfg)
    bed_threshold = args.bed_threshold or file_cfg.get("bed", {}).get("threshold", DEFAULT_THRESHOLD)
    tau = args.threshold if args.threshold is not None else shaping.tau_sev
    out = _out_dir(args.out)
    runs = []
    for seed in seeds:
        params = _params_for(args, seed, env, file_cfg)
        trajs = run_agent(args.agent, kb, patients, env, params, seed, bed_threshold, shaping, args.workers)
        runs.append(evaluate_trajectories(args.agent, trajs, patients, kb, tau))
        if args.save_trajectories:
            dump_trajectories(trajs, out / f"trajectories_{args.agent}_seed{seed}.jsonl")
    report = aggregate(runs)
    paths = {"report": out / "report.csv", "trajectory_scores": out / "trajectory_scores.csv",
             "kb": args.kb, "patients": args.patients}
    write_report_csv([report], paths["report"], metrics)
    write_series_csv(report, paths["trajectory_scores"])
    config = {"agent": args.agent, "env": asdict(env), "bed_threshold": bed_threshold, "tau": tau,
              "checkpoint": args.checkpoint, "metrics": list(metrics)}
    write_manifest(out, "evaluate", args.argv, config, seeds, paths, started)
    for name in metrics:
        ci = report.ci.get(name)
        extra = f"  [{ci[0]:.4f}, {ci[1]:.4f}]" if ci else ""
        print(f"{name:>8}: {report.means[name]:.4f}{extra}")
    return EXIT_OK


def cmd_bed(args, file_cfg) -> int:
    args.agent = "bed"
    args.checkpoint = None
    return cmd_evaluate(args, file_cfg)


def cmd_export(args, file_cfg) -> int:
    kb = load_knowledge_base(args.kb)
    patients = load_patients(args.patients, kb)
    if args.limit is not None:
        patients = patients[: args.limit]
    env, _, shaping = _configs(args, file_cfg)
    params = _params_for(args, args.seed, env, file_cfg)
    bed_threshold = args.bed_threshold or DEFAULT_THRESHOLD
    trajs = run_agent(args.agent, kb, patients, env, params, args.seed, bed_threshold,
                      shaping if args.agent != "bed" else None)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    dump_trajectories(trajs, args.out)
    print(f"wrote {len(trajs)} trajectories to {args.out}")
    return EXIT_OK


def cmd_interactive(args, file_cfg) -> int:
    kb = load_knowledge_base(args.kb)
    env, _, _ = _configs(args, file_cfg)
    if args.bed:
        responder = BedResponder(kb, args.bed_threshold or DEFAULT_THRESHOLD)
    elif args.checkpoint:
        params, _ = load_checkpoint(args.checkpoint)
        responder = CasandeResponder(params, kb)
    else:
        raise UsageError("interactive needs --checkpoint or --bed")
    traj = InteractiveSession(kb, responder, env.T).run()
    save_session(traj, args.save)
    print(f"session saved to {args.save}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_shaping_flags(p):
    p.add_argument("--T", type=int, help="maximum number of inquiries per episode")
    p.add_argument("--alpha-ex", type=float)
    p.add_argument("--alpha-co", type=float)
    p.add_argument("--alpha-sev", type=float)
    p.add_argument("--alpha-cl", type=float)
    p.add_argument("--w-si", type=float)
    p.add_argument("--threshold", type=float, help="differential membership threshold (default 0.01)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="casande-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="TOML/JSON config file (default: $CASANDE_LAB_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic knowledge base and patients")
    g.add_argument("--diseases", type=int)
    g.add_argument("--evidences", type=int)
    g.add_argument("--patients", type=int, default=2000)
    g.add_argument("--test-patients", type=int, default=0)
    g.add_argument("--severe-fraction", type=float)
    g.add_argument("--links", type=int, help="informative evidences per pathology")
    g.add_argument("--kind-mix", type=float, nargs=4, metavar=("BIN", "NUM", "CAT", "MULTI"))
    g.add_argument("--seed", type=int)
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the shaped-reward DQN agent")
    t.add_argument("--kb", required=True)
    t.add_argument("--patients", required=True)
    t.add_argument("--out", default=".")
    t.add_argument("--seed", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--optimizer", choices=("sgd", "adam"))
    t.add_argument("--env-count", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--no-shaping", action="store_true", help="set every alpha weight to 0")
    t.add_argument("--verbose", action="store_true")
    _add_shaping_flags(t)
    t.set_defaults(func=cmd_train)

    def eval_flags(p, with_agent=True):
        p.add_argument("--kb", required=True)
        p.add_argument("--patients", required=True)
        p.add_argument("--out", default=".")
        if with_agent:
            p.add_argument("--agent", choices=AGENTS, default="casande")
            p.add_argument("--checkpoint", help="checkpoint path; '{seed}' is replaced per run")
        p.add_argument("--bed-threshold", type=float)
        p.add_argument("--runs", type=int)
        p.add_argument("--seeds")
        p.add_argument("--metrics", help="comma-separated subset of " + ",".join(METRIC_NAMES))
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--save-trajectories", action="store_true")
        _add_shaping_flags(p)

    e = sub.add_parser("evaluate", help="evaluate an agent and write report CSVs")
    eval_flags(e)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bed", help="evaluate the Bayesian experimental design agent")
    eval_flags(b, with_agent=False)
    b.set_defaults(func=cmd_bed)

    x = sub.add_parser("export", help="write trajectories as JSON lines")
    x.add_argument("--kb", required=True)
    x.add_argument("--patients", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--agent", choices=AGENTS, default="casande")
    x.add_argument("--checkpoint")
    x.add_argument("--bed-threshold", type=float)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--limit", type=int)
    _add_shaping_flags(x)
    x.set_defaults(func=cmd_export)

    i = sub.add_parser("interactive", help="answer the agent's questions yourself")
    i.add_argument("--kb", required=True)
    i.add_argument("--checkpoint")
    i.add_argument("--bed", action="store_true")
    i.add_argument("--bed-threshold", type=float)
    i.add_argument("--T", type=int)
    i.add_argument("--save", default="interactive_trajectory.json")
    i.set_defaults(func=cmd_interactive)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        file_cfg = load_config_file(args.config)
        return args.func(args, file_cfg)
    except (UsageError, GeneratorConfigError, TrainConfigError, ConfigFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
