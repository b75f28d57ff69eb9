import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence, Tuple

from dotenv import load_dotenv

from beatset import class_counts, export_csv, generate_synthetic, normalize_beats, read_beats, split, write_beats
from cascade import Cascade, GateConfig, export_trace
from common import InvalidInput, __version__
from common.logger import logger, setup_logging
from deploy_sim import (
    TxMode, calibrate_profile, energy_report, read_energy_report, write_energy_report
)
from evaluator import read_sweep, sweep, write_sweep
from exit_graph import (
    DEFAULT_ROLES, ExitPlacement, NodeRole, attach_exits, check_memory_budget, load_exit_model,
    partition, read_plan, save_exit_model, write_plan
)
from experiment import RunConfig, parse_threshold_spec, verify_plan
from ga_optimizer import MetricsTable, exhaustive, full_universe, optimize, write_optimizer_report
from nn_core import default_model, init_params, model_flops
from trainer import evaluate_heads, export_head_predictions, export_history, train

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR']


def create_parser():
    parser = argparse.ArgumentParser(
        prog="edgecascade",
        description='Early-exit ECG inference across the edge-fog-cloud continuum',
        epilog='Use "edgecascade <command> --help" for command-specific options.'
    )

    # Global options
    parser.add_argument(
        '--log-level',
        choices=LOG_LEVELS,
        default=None,
        help='Set logging level (default: $EDGECASCADE_LOG_LEVEL or INFO)'
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Run configuration YAML (default: built-in defaults)')
    common.add_argument('--seed', type=int, help='Seed for every random stream (overrides the config)')

    subparsers = parser.add_subparsers(dest='command', required=True, help='Available commands')

    gen_parser = subparsers.add_parser('gen', parents=[common], help='Generate a synthetic beat file')
    gen_parser.add_argument('--per-class', type=int, help='Beats per AAMI class')
    gen_parser.add_argument('--noise-sigma', type=float, help='Gaussian noise added to each template')
    gen_parser.add_argument('--out', help='Output .beats file (default: <output.dir>/beats.beats)')
    gen_parser.add_argument('--csv', help='Also export the beats as CSV to this path')

    train_parser = subparsers.add_parser('train', parents=[common], help='Train an exit-augmented model')
    train_parser.add_argument('--beats', required=True, help='Input .beats file')
    train_parser.add_argument('--placement', help="Exit boundaries, e.g. '2' or '2,4'")
    train_parser.add_argument('--bottleneck', type=int, help='Bottleneck size in floats')
    train_parser.add_argument('--epochs', type=int, help='Training epochs')
    train_parser.add_argument('--batch-size', type=int, help='Mini-batch size')
    train_parser.add_argument('--lr', type=float, help='Learning rate')
    train_parser.add_argument('--out', help='Output .dcn model file (default: <output.dir>/<output.name>.dcn)')

    sweep_parser = subparsers.add_parser('sweep', parents=[common], help='Sweep confidence thresholds')
    sweep_parser.add_argument('--model', required=True, help='Trained .dcn model file')
    sweep_parser.add_argument('--beats', required=True, help='Input .beats file')
    sweep_parser.add_argument('--subset', choices=['train', 'validation', 'test', 'all'], default='test',
                              help='Which part of the seeded split to evaluate (default: test)')
    sweep_parser.add_argument('--thresholds', help="Threshold grid 'start:stop:step' or a comma list")
    sweep_parser.add_argument('--roles', help="Node roles per stage, e.g. 'edge,cloud'")
    sweep_parser.add_argument('--trace-threshold', type=float, help='Also export the decision trace at this threshold')
    sweep_parser.add_argument('--out', help='Output stem for .csv and .json (default: <output.dir>/sweep)')

    optimize_parser = subparsers.add_parser('optimize', parents=[common], help='Search placements and thresholds')
    optimize_parser.add_argument('--sweeps', nargs='+', required=True, help='Sweep .json reports, one per placement')
    optimize_parser.add_argument('--weights', help="Objective weights 'w_acc,w_sen,w_com'")
    optimize_parser.add_argument('--out', help='Output report (default: <output.dir>/optimizer.json)')

    partition_parser = subparsers.add_parser('partition', parents=[common], help='Split a model into node stages')
    partition_parser.add_argument('--model', help='Exit model .dcn (default: freshly initialized model)')
    partition_parser.add_argument('--placement', help="Exit boundaries, e.g. '2' or '2,4'")
    partition_parser.add_argument('--roles', help="Node roles per stage, e.g. 'edge,cloud'")
    partition_parser.add_argument('--out-dir', help='Directory for stage files (default: <output.dir>/plan)')

    simulate_parser = subparsers.add_parser('simulate', parents=[common], help='Model edge current and savings')
    simulate_parser.add_argument('--sweep', required=True, help='Sweep .json report')
    simulate_parser.add_argument('--measured', help='Measured currents (mA) at the deployment thresholds, comma list')
    simulate_parser.add_argument('--tx-mode', choices=[m.value for m in TxMode], default='broadcast',
                                 help='Radio mode of the measured currents (default: broadcast)')
    simulate_parser.add_argument('--out', help='Output energy report (default: <output.dir>/energy.csv)')

    verify_parser = subparsers.add_parser('verify', parents=[common], help='Check a partition plan end to end')
    verify_parser.add_argument('--plan', required=True, help='Plan manifest (.plan.json)')
    verify_parser.add_argument('--beats', help='Input .beats file (default: freshly generated synthetic beats)')
    verify_parser.add_argument('--limit', type=int, default=200, help='Beats to check (default: 200)')
    verify_parser.add_argument('--thresholds', help="Threshold grid 'start:stop:step' or a comma list")

    plots_parser = subparsers.add_parser('plots', parents=[common], help='Plot sweep and energy reports')
    plots_parser.add_argument('--sweeps', nargs='*', default=[], help='Sweep .json reports')
    plots_parser.add_argument('--energy', help='Energy .csv report')
    plots_parser.add_argument('--out-dir', help='Directory for PNG files (default: <output.dir>/plots)')

    return parser


def load_config(args) -> RunConfig:
    config = RunConfig.load(args.config)
    config.set_seed(args.seed)
    return config


def output_path(given: Optional[str], config: RunConfig, default_name: str) -> str:
    if given:
        return given
    return str(Path(config['output']['dir']) / default_name)


def resolve_roles(text: Optional[str], config: RunConfig, num_exits: int) -> Tuple[NodeRole, ...]:
    if text:
        return tuple(NodeRole.parse(r) for r in text.split(','))
    roles = config.roles()
    if len(roles) == num_exits + 1:
        return roles
    logger.info(f"Configured roles do not fit {num_exits} exit(s); using {[r.label for r in DEFAULT_ROLES[num_exits + 1]]}")
    return DEFAULT_ROLES[num_exits + 1]


def build_exit_model(config: RunConfig, placement: ExitPlacement):
    m = config['model']
    model = default_model(channels=tuple(m['channels']), hidden=m['hidden'], kernel_size=m['kernel_size'])
    seed = config['training']['seed']
    params = init_params(model, seed=seed)
    return attach_exits(model, params, placement, config['exits']['bottleneck_size'], seed=seed)


def load_split_beats(path: str, config: RunConfig, subset: str):
    beats, _ = read_beats(path)
    if subset == 'all':
        return beats
    data = config['data']
    parts = split(beats, tuple(data['split']), data['seed'])
    return list(getattr(parts, subset))


def handle_gen_command(args):
    try:
        logger.info("=== Generating Synthetic Beats ===")
        config = load_config(args)
        args.out = output_path(args.out, config, 'beats.beats')
        config.override('data', 'per_class', args.per_class)
        config.override('data', 'noise_sigma', args.noise_sigma)
        data = config['data']

        beats = generate_synthetic(data['per_class'], seed=data['seed'], noise_sigma=data['noise_sigma'])
        counts = {cls.name: n for cls, n in class_counts(beats).items()}
        logger.info(f"Generated {len(beats)} beats: {counts}")
        write_beats(args.out, beats, normalized=False, metadata=config.provenance())
        logger.info(f"Beats written to {args.out}")
        if args.csv:
            export_csv(args.csv, beats, metadata=config.provenance())
            logger.info(f"CSV export written to {args.csv}")

    except Exception as e:
        logger.error(f"Failed to generate beats: {e}")
        raise


def handle_train_command(args):
    try:
        logger.info("=== Training Exit Model ===")
        config = load_config(args)
        args.out = output_path(args.out, config, f"{config['output']['name']}.dcn")
        if args.placement:
            config.override('exits', 'placement', list(ExitPlacement.parse(args.placement).boundaries))
        config.override('exits', 'bottleneck_size', args.bottleneck)
        config.override('training', 'epochs', args.epochs)
        config.override('training', 'batch_size', args.batch_size)
        config.override('training', 'learning_rate', args.lr)

        beats, _ = read_beats(args.beats)
        data = config['data']
        parts = split(beats, tuple(data['split']), data['seed'])
        logger.info(f"Split: {len(parts.train)} train, {len(parts.validation)} validation, {len(parts.test)} test")

        exit_model, exit_params = build_exit_model(config, config.placement())
        _, total = model_flops(exit_model.backbone)
        logger.info(f"Backbone FLOPs per beat: {total}, exits at {exit_model.placement.label}")

        result = train(exit_model, exit_params, parts, config.train_config())
        metadata = config.provenance()
        save_exit_model(args.out, exit_model, result.params, metadata)

        out = Path(args.out)
        export_history(out.with_suffix('.history.csv'), result.history, metadata)
        if parts.test:
            evaluation = evaluate_heads(exit_model, result.params, parts.test)
            export_head_predictions(out.with_suffix('.heads.csv'), evaluation, parts.test, metadata)
        logger.info(f"Training complete; best epoch {result.history.best_epoch}")

    except Exception as e:
        logger.error(f"Failed to train model: {e}")
        raise


def handle_sweep_command(args):
    try:
        logger.info("=== Sweeping Confidence Thresholds ===")
        config = load_config(args)
        args.out = output_path(args.out, config, 'sweep')
        thresholds = parse_threshold_spec(args.thresholds) if args.thresholds else config.thresholds()

        exit_model, exit_params, _ = load_exit_model(args.model)
        roles = resolve_roles(args.roles, config, exit_model.placement.num_exits)
        plan = partition(exit_model, exit_model.placement, roles)
        beats = load_split_beats(args.beats, config, args.subset)
        logger.info(f"Evaluating {len(beats)} beats from the {args.subset} subset")

        report = sweep(plan, exit_params, beats, thresholds,
                       raw_beat_bytes=config['sweep']['raw_beat_bytes'],
                       links=config.link_profile(), workers=config['sweep']['workers'])
        metadata = config.provenance()
        write_sweep(report, args.out, metadata)

        if args.trace_threshold is not None:
            gate_config = GateConfig.uniform(args.trace_threshold, exit_model.placement.num_exits)
            result = Cascade(plan, exit_params).classify_batch(beats, gate_config, config['sweep']['workers'])
            export_trace(Path(args.out).with_suffix('.trace.csv'), result.decisions, metadata)

    except Exception as e:
        logger.error(f"Failed to sweep thresholds: {e}")
        raise


def handle_optimize_command(args):
    try:
        logger.info("=== Optimizing Exit Placement ===")
        config = load_config(args)
        args.out = output_path(args.out, config, 'optimizer.json')
        if args.weights:
            try:
                w_acc, w_sen, w_com = (float(w) for w in args.weights.split(','))
            except ValueError:
                raise InvalidInput(f"--weights expects three comma-separated numbers, got '{args.weights}'")
            config.override('optimizer', 'w_acc', w_acc)
            config.override('optimizer', 'w_sen', w_sen)
            config.override('optimizer', 'w_com', w_com)

        reports = [read_sweep(path) for path in args.sweeps]
        table = MetricsTable.from_reports(reports)
        universe = full_universe(table)
        weights, ga_config = config.objective_weights(), config.ga_config()
        logger.info(f"Universe: {len(table.placements)} placements x {len(table.thresholds)} thresholds")

        result = optimize(universe, table, weights, ga_config)
        oracle = exhaustive(universe, table, weights)
        if result.score.of_value < oracle.score.of_value:
            logger.warning(
                f"GA optimum {result.score.of_value:.6f} is below the exhaustive optimum {oracle.score.of_value:.6f}"
            )
        write_optimizer_report(args.out, result, weights, ga_config, table, oracle, config.provenance())
        logger.info(f"Best candidate: {table.describe(result.best)}")

    except Exception as e:
        logger.error(f"Failed to optimize: {e}")
        raise


def handle_partition_command(args):
    try:
        logger.info("=== Partitioning Exit Model ===")
        config = load_config(args)
        args.out_dir = output_path(args.out_dir, config, 'plan')
        if args.model:
            exit_model, exit_params, _ = load_exit_model(args.model)
            if args.placement and ExitPlacement.parse(args.placement) != exit_model.placement:
                raise InvalidInput(
                    f"Model {args.model} has exits at {exit_model.placement.label}, not {args.placement}"
                )
        else:
            placement = ExitPlacement.parse(args.placement) if args.placement else config.placement()
            logger.warning("No --model given; partitioning a freshly initialized model")
            exit_model, exit_params = build_exit_model(config, placement)

        roles = resolve_roles(args.roles, config, exit_model.placement.num_exits)
        plan = partition(exit_model, exit_model.placement, roles)
        budget = check_memory_budget(plan, config['exits']['edge_budget_bytes'])
        for entry in budget.checked:
            logger.info(f"Stage {entry.stage_index} ({entry.role.label}): {entry.serialized_bytes} bytes "
                        f"of {entry.budget_bytes} budget")
        write_plan(plan, exit_params, args.out_dir, config['output']['name'], config.provenance())

    except Exception as e:
        logger.error(f"Failed to partition model: {e}")
        raise


def handle_simulate_command(args):
    try:
        logger.info("=== Simulating Edge Energy ===")
        config = load_config(args)
        args.out = output_path(args.out, config, 'energy.csv')
        report = read_sweep(args.sweep)
        profile = config.power_profile()
        thresholds = config['power']['thresholds']

        if args.measured:
            measured = [float(v) for v in args.measured.split(',')]
            fractions = [1.0 - report.point_at(t).exit_rate[0] for t in thresholds]
            profile = calibrate_profile(profile, fractions, measured, args.tx_mode)

        energy = energy_report(profile, report, thresholds)
        write_energy_report(args.out, energy, config.provenance())

    except Exception as e:
        logger.error(f"Failed to simulate energy: {e}")
        raise


def handle_verify_command(args):
    try:
        logger.info("=== Verifying Partition Plan ===")
        config = load_config(args)
        thresholds = parse_threshold_spec(args.thresholds) if args.thresholds else config.thresholds()
        plan, exit_params = read_plan(args.plan)
        if args.beats:
            beats, _ = read_beats(args.beats)
        else:
            data = config['data']
            per_class = max(1, args.limit // 5 + 1)
            beats = normalize_beats(generate_synthetic(per_class, seed=data['seed'], noise_sigma=data['noise_sigma']))
        beats = beats[:args.limit]
        results = verify_plan(plan, exit_params, beats, thresholds, Path(args.plan).parent)
        logger.info(f"All {len(results)} checks passed on {len(beats)} beats")

    except Exception as e:
        logger.error(f"Verification failed: {e}")
        raise


def handle_plots_command(args):
    """Handle the plots command for generating visualizations."""
    try:
        logger.info("=== Generating Visualization Plots ===")

        # Import here to avoid requiring matplotlib if not using plots
        try:
            from visualization import SweepPlotter
        except ImportError:
            logger.error("Failed to import plotting dependencies. Please install matplotlib and seaborn:")
            logger.error("pip install matplotlib seaborn")
            raise

        if not args.sweeps and not args.energy:
            raise InvalidInput("Nothing to plot; pass --sweeps and/or --energy")

        args.out_dir = output_path(args.out_dir, load_config(args), 'plots')
        plotter = SweepPlotter(args.out_dir)
        for path in args.sweeps:
            plotter.plot_sweep(read_sweep(path), Path(path).stem)
        if args.energy:
            plotter.plot_energy(read_energy_report(args.energy), Path(args.energy).stem)

        logger.info(f"Plot generation complete. Check '{args.out_dir}' for results.")

    except Exception as e:
        logger.error(f"Failed to generate plots: {e}")
        raise


HANDLERS = {
    'gen': handle_gen_command,
    'train': handle_train_command,
    'sweep': handle_sweep_command,
    'optimize': handle_optimize_command,
    'partition': handle_partition_command,
    'simulate': handle_simulate_command,
    'verify': handle_verify_command,
    'plots': handle_plots_command,
}


# Main entry point for edgecascade
def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = create_parser()
    args = parser.parse_args(argv)
    log_level = args.log_level or os.environ.get('EDGECASCADE_LOG_LEVEL', 'INFO')

    # Set up logging
    try:
        setup_logging(log_level)
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)

    logger.info(f"edgecascade {__version__} - Command: {args.command}")

    try:
        HANDLERS[args.command](args)
        logger.info("Command completed successfully")
        return 0

    except KeyboardInterrupt:
        logger.info("Operation cancelled by user")
        sys.exit(1)
    except Exception as e:
        logger.error(f"Command failed: {e}")
        if log_level.upper() == 'DEBUG':
            logger.exception("Full traceback:")
        sys.exit(1)


if __name__ == "__main__":
    sys.exit(main())
