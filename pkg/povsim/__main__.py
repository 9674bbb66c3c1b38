# standard library imports
import atexit
import logging
import shutil
import sys
import tempfile
from argparse import ArgumentParser
from pathlib import Path

# local imports
import povsim.config.config_constants as cfg
import povsim.config.config_objects as cfg_obj
from povsim.dataset import load_csv, make_synthetic, write_csv
from povsim.errors import ConfigError, IoError, PovsimError, ValidationError
from povsim.simulation import aggregate, run_experiment
from povsim.tools.report import format_report, summarize_runs
from povsim.tools.results import read_runs_csv, write_aggregates_csv, write_aggregates_json, write_groups_csv, write_runs_csv
from povsim.util import DelayInterrupt, save_json


def cmd_generate(args):
    dataset, _ = make_synthetic(args.n, args.d, args.groups, noise_sd=args.noise_sd, seed=args.seed)
    out = Path(args.out)
    try:
        write_csv(dataset, out)
    except OSError as e:
        raise IoError(f"cannot write {out}: {e.strerror or e}")
    sizes = ", ".join(f"{label}: {n}" for label, n in dataset.group_sizes().items())
    print(f"N = {dataset.n}, d = {dataset.dimensionality}, groups = {{{sizes}}}")
    logging.info(f"synthetic dataset written to {out}")


def log_to_wandb(config, aggregates, project=cfg.WANDB_PROJECT):
    wandb_dir = tempfile.mkdtemp()  # keeps wandb files out of the output directory
    atexit.register(shutil.rmtree, wandb_dir, ignore_errors=True)
    import wandb
    run = wandb.init(dir=wandb_dir, project=project, config=config.to_dict())
    for a in aggregates:
        wandb.log({"strategy": a.strategy, "budget": a.budget, **{f"{m}_mean": s.mean for m, s in a.metrics.items()}})
    run.finish()


def cmd_run(args):
    config = cfg_obj.load_config(args.config).with_overrides(out=args.out, jobs=args.jobs, seed=args.seed)
    if config.csv is not None:
        dataset = load_csv(config.csv)
    else:
        s = config.synthetic
        dataset, _ = make_synthetic(s.n, s.d, s.groups, noise_sd=s.noise_sd, seed=s.seed)
    logging.info(f"dataset: N = {dataset.n}, d = {dataset.dimensionality}, {len(dataset.groups)} group(s)")

    records, aggregates = [], []
    for kind in config.strategies:
        sim = config.simulation_for(kind)
        logging.info(f"--- NOW RUNNING {kind.value} ({sim.repetitions} repetitions) ---")
        runs = run_experiment(dataset, sim)
        records.extend(runs)
        aggregates.extend(aggregate(runs, sim.bootstrap_samples, sim.seed, sim.confidence))
    records.sort(key=lambda r: r.key)
    aggregates.sort(key=lambda a: (a.strategy, a.budget))

    out = config.output
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create output directory {out}: {e.strerror or e}")
    with DelayInterrupt():
        write_runs_csv(records, out / cfg.RUNS_FILE)
        write_groups_csv(records, out / cfg.GROUPS_FILE)
        write_aggregates_csv(aggregates, out / cfg.AGGREGATES_FILE)
        if "json" in config.formats:
            write_aggregates_json(aggregates, out / cfg.AGGREGATES_JSON_FILE)
        try:
            save_json(config.to_dict(), out / cfg.CONFIG_SNAPSHOT_FILE)
        except OSError as e:
            raise IoError(f"cannot write {out / cfg.CONFIG_SNAPSHOT_FILE}: {e.strerror or e}")
    logging.info(f"results written to {out}")

    if args.wandb:
        log_to_wandb(config, aggregates)


def cmd_report(args):
    records = read_runs_csv(args.runs)
    print(format_report(summarize_runs(records, args.fraction)), end="")


def build_parser():
    parser = ArgumentParser(prog="povsim", description="Active label acquisition simulations for poverty prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="writes a synthetic dataset")
    gen.add_argument('--n', type=int, required=True, help='number of points')
    gen.add_argument('--d', type=int, required=True, help='number of features')
    gen.add_argument('--groups', type=int, default=1, help='number of groups')
    gen.add_argument('--noise-sd', dest='noise_sd', type=float, default=0.5, help='standard deviation of the log-consumption noise')
    gen.add_argument('--seed', type=int, default=0, help='generator seed')
    gen.add_argument('--out', type=str, default="data.csv", help='output CSV file')
    gen.set_defaults(func=cmd_generate)

    run = sub.add_parser("run", help="runs the experiment described by a config file")
    run.add_argument('--config', type=str, required=True, help='YAML experiment file')
    run.add_argument('--out', type=str, default=None, help='output directory (overrides the config)')
    run.add_argument('--jobs', type=int, default=None, help=f'parallel repetition workers (default: {cfg.DEFAULT_JOBS})')
    run.add_argument('--seed', type=int, default=None, help='acquisition seed (overrides the config)')
    run.add_argument('--wandb', dest='wandb', action='store_true', help='also log the aggregates on Weights and Biases')
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="summarizes a runs.csv file")
    rep.add_argument('runs', type=str, help='runs.csv produced by the run command')
    rep.add_argument('--fraction', type=float, default=cfg.REPORT_FRACTION, help='share of the final Spearman rho to reach')
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, ValidationError) as e:
        logging.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return cfg.EXIT_CONFIG
    except (PovsimError, OSError) as e:
        logging.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return cfg.EXIT_RUNTIME
    return cfg.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
