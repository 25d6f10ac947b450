import argparse
import logging
import sys
import typing

import rich.logging

import schurqnn
import schurqnn.cli
import schurqnn.config
import schurqnn.errors

logger = logging.getLogger(__name__)

_MODELS = {'tl': 'temperley-lieb', 'temperley-lieb': 'temperley-lieb'}

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group('experiment')
    g.add_argument('--config', metavar='PATH', help='JSON config file')
    g.add_argument('--preset', choices=sorted(schurqnn.config.PRESETS))
    g.add_argument('--scale', type=float, metavar='F', help='multiply trial counts by F')
    g.add_argument('--seed', type=int)
    g.add_argument('--threads', type=int)
    g.add_argument('--out', metavar='DIR', help='output directory')
    g.add_argument('-v', '--verbose', action='store_true')
    g.add_argument('-q', '--quiet', action='store_true')

    g = common.add_argument_group('overrides')
    g.add_argument('--model', choices=sorted(_MODELS))
    g.add_argument('--L', type=int, dest='L')
    g.add_argument('--n-a', type=int, dest='n_a')
    g.add_argument('--dataset', choices=['bell', 'schur'])
    g.add_argument('--sectors', type=int, nargs='+')
    g.add_argument('--a-kind', choices=['rotating', 'system'])
    g.add_argument('--p', type=int, nargs='*', dest='p_values')
    g.add_argument('--T', type=float, dest='T')
    g.add_argument('--trials', type=int)
    g.add_argument('--max-epochs', type=int)
    g.add_argument('--lr', type=float)
    g.add_argument('--samples', type=int)
    return common

def parser() -> argparse.ArgumentParser:
    common = _common()
    p = argparse.ArgumentParser(prog='schurqnn', description='Randomized QNN experiments on fragmented Hilbert spaces.')
    p.add_argument('--version', action='version', version=f'%(prog)s {schurqnn.__version__}')
    sub = p.add_subparsers(dest='command', required=True)

    sub.add_parser('decompose', parents=[common], help='split the system into Krylov sectors')
    sub.add_parser('train', parents=[common], help='loss curves for each p')
    sub.add_parser('minima', parents=[common], help='distribution of final losses for each p')
    verify = sub.add_parser('verify', parents=[common], help='numerical checks of the landscape statements')
    verify.add_argument('check', choices=list(schurqnn.cli.VERIFIERS))
    dataset = sub.add_parser('dataset', help='dataset tools')
    dataset_sub = dataset.add_subparsers(dest='action', required=True)
    dataset_sub.add_parser('export', parents=[common], help='write the sector-tagged dataset')
    return p

def _overrides(args: argparse.Namespace) -> dict[str, typing.Any]:
    values: dict[str, dict[str, typing.Any]] = {'system': {}, 'ansatz': {}, 'train': {}, 'verify': {}}
    placement = {
        'L': ('system', 'L'),
        'n_a': ('system', 'n_a'),
        'dataset': ('system', 'dataset'),
        'sectors': ('system', 'sectors'),
        'a_kind': ('system', 'a_kind'),
        'p_values': ('ansatz', 'p_values'),
        'T': ('ansatz', 'T'),
        'trials': ('train', 'trials'),
        'max_epochs': ('train', 'max_epochs'),
        'lr': ('train', 'learning_rate'),
        'samples': ('verify', 'samples'),
    }
    for arg, (section, key) in placement.items():
        v = getattr(args, arg)
        if v is not None:
            values[section][key] = v
    if args.model is not None:
        values['system']['model'] = _MODELS[args.model]

    out: dict[str, typing.Any] = {k: v for k, v in values.items() if v}
    for arg, key in [('seed', 'seed'), ('threads', 'threads'), ('out', 'output_dir')]:
        v = getattr(args, arg)
        if v is not None:
            out[key] = v
    return out

def run(argv: typing.Sequence[str] | None = None) -> int:
    args = parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        format = '%(message)s',
        level = level,
        handlers = [rich.logging.RichHandler(markup=True)],
    )

    try:
        config = schurqnn.config.ExperimentConfig.with_values(
            preset = args.preset,
            config_path = args.config,
            overrides = _overrides(args),
            scale = args.scale,
        )
        match args.command:
            case 'decompose':
                return schurqnn.cli.cmd_decompose(config)
            case 'train':
                return schurqnn.cli.cmd_train(config)
            case 'minima':
                return schurqnn.cli.cmd_minima(config)
            case 'verify':
                return schurqnn.cli.cmd_verify(config, args.check)
            case 'dataset':
                return schurqnn.cli.cmd_dataset_export(config)
            case other:
                raise schurqnn.errors.UsageError(f'unknown command {other!r}')
    except schurqnn.errors.Error as e:
        logger.error('%s: %s', type(e).__name__, e)
        return e.exit_code

def main() -> None:
    sys.exit(run())

if __name__ == '__main__':
    main()
