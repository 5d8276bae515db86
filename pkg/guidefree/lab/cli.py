#!/usr/bin/env python3
"""
guidefree command line: train, sample, verify, metrics, sweep, story, plot.

Exit status 0 on success, 1 when a verify suite or the story fails, 2 on configuration or artifact errors.
"""
import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from guidefree import __version__
from guidefree.common.utils import ConfigError, GuidefreeError
from guidefree.lab.config import load_config
from guidefree.lab.experiment import evaluate_run, gamma_sweep, run_sampling, run_training, sweep_configs, \
    thread_count
from guidefree.lab.plots import plot_runs
from guidefree.lab.story import run_story
from guidefree.lab.verify import SUITES, VerifyOptions, report_document, run_verify, write_reports

logger = logging.getLogger('guidefree')

LOG_FORMAT = '[guidefree] %(levelname)s %(name)s: %(message)s'
LOG_LEVEL_VARIABLE = 'GUIDEFREE_LOG_LEVEL'

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


def configure_logging(verbose: bool):
    level = os.environ.get(LOG_LEVEL_VARIABLE, 'DEBUG' if verbose else 'INFO').upper()
    if level not in logging._nameToLevel:  # same keys as getLevelNamesMapping() (3.11+)
        raise ConfigError(LOG_LEVEL_VARIABLE, 'unknown log level {!r}'.format(level))
    logging.basicConfig(level=level, format=LOG_FORMAT)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='guidefree', description='Class-conditional diffusion lab: training with '
                                     'guidance-free objectives, sampling, metrics and closed-form verification.')
    parser.add_argument('--version', action='version', version='%(prog)s {}'.format(__version__))
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', help='train one config into <out>/<name>')
    train.add_argument('--config', required=True, type=Path)
    train.add_argument('--seed', type=int, help='overrides the seed of the config')
    train.add_argument('--out', help='output root, default: "out" of the config')
    train.add_argument('--no-progress', action='store_true')

    sample = commands.add_parser('sample', help='sample a checkpoint, optionally with classifier-free guidance')
    sample.add_argument('--checkpoint', required=True, type=Path)
    sample.add_argument('--class', dest='classes', type=int, action='append',
                        help='class to sample, repeatable; default: every class')
    sample.add_argument('--n', type=int, default=1000)
    sample.add_argument('--gamma', type=float, default=0.0, help='guidance scale, 0 samples unguided')
    sample.add_argument('--seed', type=int, default=0)
    sample.add_argument('--shared-noise', action='store_true', help='start every class from the same latents')
    sample.add_argument('--config', type=Path, help='config providing the schedule, default: the run config')
    sample.add_argument('--out', type=Path, help='default: the run directory of the checkpoint')

    verify = commands.add_parser('verify', help='check the closed-form results, nonzero exit on failure')
    verify.add_argument('--suite', default='all', choices=list(SUITES) + ['all'])
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--tolerance', type=float, help='replaces the tolerance of every check')
    verify.add_argument('--problems', type=int, default=100)
    verify.add_argument('--mc-samples', type=int, default=100_000)
    verify.add_argument('--delta', type=float, default=1e-9, help='probability floor of the simplex oracles')
    verify.add_argument('--out', type=Path, help='directory for JSON reports, default: print to stdout')

    metrics = commands.add_parser('metrics', help='recompute metrics and best checkpoints of a run')
    metrics.add_argument('run_dir', type=Path)

    sweep = commands.add_parser('sweep', help='train several configs, or sweep guidance scales of one checkpoint')
    sweep.add_argument('--config', required=True, type=Path, nargs='+')
    sweep.add_argument('--checkpoint', type=Path, help='sweep the gamma grid of the config on this checkpoint')
    sweep.add_argument('--gamma', type=float, action='append', help='guidance scale, repeatable; default: config grid')
    sweep.add_argument('--out', help='output root')

    story = commands.add_parser('story', help='class separation of a base run and its fine-tuned run, nonzero exit '
                                'when it does not hold')
    story.add_argument('--base', required=True, type=Path, help='run directory of the base model')
    story.add_argument('--finetune', required=True, type=Path, help='run directory fine-tuned from the base')
    story.add_argument('--out', type=Path, help='default: reports/story of the fine-tuned run')

    plot = commands.add_parser('plot', help='learning curves, trade-off and sample scatters of runs')
    plot.add_argument('run_dirs', type=Path, nargs='+')
    plot.add_argument('--out', type=Path, help='default: plots/ of the first run')
    return parser


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    layout = run_training(config, args.out, progress=not args.no_progress)
    print(layout.root)
    return EXIT_OK


def cmd_sample(args) -> int:
    config = load_config(args.config) if args.config is not None else None
    out = args.out if args.out is not None else args.checkpoint.resolve().parent.parent
    paths = run_sampling(args.checkpoint, args.classes, args.n, args.gamma, args.seed, out, args.shared_noise, config)
    for path in paths:
        print(path)
    return EXIT_OK


def cmd_verify(args) -> int:
    options = VerifyOptions(seed=args.seed, problems=args.problems, mc_samples=args.mc_samples, delta=args.delta,
                            tolerance=args.tolerance, threads=thread_count())
    reports = run_verify(args.suite, options)
    if args.out is not None:
        for path in write_reports(reports, args.out):
            logger.info('wrote %s', path)
    else:
        sys.stdout.write(report_document(reports))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def cmd_metrics(args) -> int:
    records = evaluate_run(args.run_dir, thread_count())
    logger.info('evaluated %d checkpoints of %s', len(records), args.run_dir)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.checkpoint is not None:
        if len(args.config) != 1:
            raise ConfigError('config', 'a guidance sweep takes exactly one config')
        config = load_config(args.config[0])
        out = Path(args.out) if args.out is not None else args.checkpoint.resolve().parent.parent / 'reports'
        print(gamma_sweep(args.checkpoint, config, out, thread_count(), args.gamma))
        return EXIT_OK
    for layout in sweep_configs(args.config, args.out, thread_count()):
        print(layout.root)
    return EXIT_OK


def cmd_story(args) -> int:
    report, path = run_story(args.base, args.finetune, args.out, thread_count())
    print(path)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_plot(args) -> int:
    for path in plot_runs(args.run_dirs, args.out):
        print(path)
    return EXIT_OK


COMMANDS = {
    'train': cmd_train,
    'sample': cmd_sample,
    'verify': cmd_verify,
    'metrics': cmd_metrics,
    'sweep': cmd_sweep,
    'story': cmd_story,
    'plot': cmd_plot,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.verbose)
        return COMMANDS[args.command](args)
    except (GuidefreeError, OSError) as e:
        print('guidefree: error: {}'.format(e), file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
