#!/usr/bin/env python3
"""
SOUP Dictionary Learning CLI
Command-line interface for learning, reconstruction and benchmark experiments
"""
import argparse
import logging
import os
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))

from dotenv import load_dotenv

load_dotenv()

# BLAS picks its thread count when numpy is first imported
_threads = os.getenv('SOUP_THREADS', '1').strip()
if _threads.isdigit() and int(_threads) > 0:
    for _var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
        os.environ[_var] = _threads

from pydantic import ValidationError

from core.exceptions import ParameterError, SoupError
from core.reporter import RunReporter
from core.sensing import fft_workers
from experiments.commands import COMMANDS
from experiments.config import ConfigError, load_experiment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

# parser entries that are not experiment settings
_META = {'command', 'config', 'verbose'}


class UsageError(Exception):
    pass


class SoupArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting with argparse's own status 2"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', '-c', type=Path, help='key=value config file (section = command name)')
    parser.add_argument('--output-dir', '-o', dest='output_dir', type=Path, help='Directory for artifacts')
    parser.add_argument('--seed', type=int, help='Random seed')
    parser.add_argument('--verbose', '-v', action='count', default=0, help='-v for progress, -vv for diagnostics')


def build_parser() -> argparse.ArgumentParser:
    parser = SoupArgumentParser(
        prog='soup.py',
        description='SOUP - sum-of-outer-products dictionary learning and dictionary-blind MRI',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  soup.py learn --images barbara.pgm boats.pgm --lambda 69 --iterations 30
  soup.py simulate --phantom 128 --factor 2.5 -o sim
  soup.py recon --kspace sim/kspace.bin --mask sim/mask.txt --reference sim/reference.img
  soup.py code --dictionary out/dictionary.bin --patches out/patches.bin --method omp --sparsity 5
  soup.py bench
  soup.py metrics --image recon.img --reference sim/reference.img
        """
    )
    subparsers = parser.add_subparsers(dest='command', help='Commands', parser_class=SoupArgumentParser)

    # Learn command
    learn_parser = subparsers.add_parser('learn', help='Learn a dictionary from image patches')
    _common(learn_parser)
    learn_parser.add_argument('--images', nargs='+', type=Path, help='Training images (SOUPIMG1 or PGM)')
    learn_parser.add_argument('--patches', type=Path, help='Stored patch matrix instead of images')
    learn_parser.add_argument('--patch-side', dest='patch_side', type=int)
    learn_parser.add_argument('--num-patches', dest='num_patches', type=int)
    learn_parser.add_argument('--num-atoms', dest='num_atoms', type=int)
    learn_parser.add_argument('--penalty', choices=['l0', 'l1'])
    learn_parser.add_argument('--lambda', dest='lam', type=float, help='l0 threshold (penalty lambda^2)')
    learn_parser.add_argument('--mu', type=float, help='l1 weight')
    learn_parser.add_argument('--cap', type=float, help='l_inf bound L on the codes')
    learn_parser.add_argument('--iterations', type=int)
    learn_parser.add_argument('--atom-order', dest='atom_order', choices=['cyclic', 'random'])
    learn_parser.add_argument('--init', choices=['dct', 'dct+random'])
    learn_parser.add_argument('--record-steps', dest='record_steps', action='store_true', default=None,
                              help='Trace the objective after every block update')

    # Recon command
    recon_parser = subparsers.add_parser('recon', help='Dictionary-blind reconstruction from k-space')
    _common(recon_parser)
    recon_parser.add_argument('--kspace', type=Path)
    recon_parser.add_argument('--mask', type=Path)
    recon_parser.add_argument('--reference', type=Path, help='Ground truth for the PSNR trace')
    recon_parser.add_argument('--penalty', choices=['l0', 'l1'])
    recon_parser.add_argument('--nu', type=float, help='Data weight (default 1e6 / pixels)')
    recon_parser.add_argument('--lambda-start', dest='lambda_start', type=float)
    recon_parser.add_argument('--lambda-stop', dest='lambda_stop', type=float)
    recon_parser.add_argument('--mu-start', dest='mu_start', type=float)
    recon_parser.add_argument('--mu-stop', dest='mu_stop', type=float)
    recon_parser.add_argument('--schedule', choices=['linear', 'geometric'])
    recon_parser.add_argument('--inner-iters', dest='inner_iters', type=int)
    recon_parser.add_argument('--outer-iters', dest='outer_iters', type=int)
    recon_parser.add_argument('--patch-side', dest='patch_side', type=int)
    recon_parser.add_argument('--stride', type=int)
    recon_parser.add_argument('--no-wrap', dest='wrap', action='store_false', default=None)
    recon_parser.add_argument('--num-atoms', dest='num_atoms', type=int)
    recon_parser.add_argument('--cap', type=float)
    recon_parser.add_argument('--solver', choices=['fourier', 'cg'])
    recon_parser.add_argument('--cg-tol', dest='cg_tol', type=float)
    recon_parser.add_argument('--cg-max-iters', dest='cg_max_iters', type=int)
    recon_parser.add_argument('--atom-order', dest='atom_order', choices=['cyclic', 'random'])
    recon_parser.add_argument('--init', choices=['dct', 'dct+random'])
    recon_parser.add_argument('--track-fixed-objective', dest='track_fixed_objective',
                              action='store_true', default=None)

    # Simulate command
    sim_parser = subparsers.add_parser('simulate', help='Simulate undersampled k-space measurements')
    _common(sim_parser)
    sim_parser.add_argument('--image', type=Path, help='Reference image')
    sim_parser.add_argument('--phantom', type=int, help='Use a synthetic phantom of this size')
    sim_parser.add_argument('--scheme', choices=['cartesian', 'random2d'])
    sim_parser.add_argument('--factor', type=float, help='Undersampling factor')
    sim_parser.add_argument('--sigma', type=float, help='Complex noise standard deviation')

    # Code command
    code_parser = subparsers.add_parser('code', help='Sparse-code patches with a fixed dictionary')
    _common(code_parser)
    code_parser.add_argument('--dictionary', type=Path)
    code_parser.add_argument('--patches', type=Path)
    code_parser.add_argument('--method', choices=['omp', 'l0'])
    code_parser.add_argument('--sparsity', type=int, help='OMP atoms per signal')
    code_parser.add_argument('--err-tol', dest='err_tol', type=float)
    code_parser.add_argument('--lambda', dest='lam', type=float)
    code_parser.add_argument('--cap', type=float)
    code_parser.add_argument('--sweeps', type=int)
    code_parser.add_argument('--debias', action='store_true', default=None)

    # Bench command
    bench_parser = subparsers.add_parser('bench', help='Time SOUP-DILLO iterations as N and J grow')
    _common(bench_parser)
    bench_parser.add_argument('--patch-side', dest='patch_side', type=int)
    bench_parser.add_argument('--base-signals', dest='base_signals', type=int)
    bench_parser.add_argument('--base-atoms', dest='base_atoms', type=int)
    bench_parser.add_argument('--lambda', dest='lam', type=float)
    bench_parser.add_argument('--iterations', type=int)
    bench_parser.add_argument('--repeats', type=int)

    # Metrics command
    metrics_parser = subparsers.add_parser('metrics', help='PSNR, NSRE and sparsity of stored results')
    _common(metrics_parser)
    metrics_parser.add_argument('--image', type=Path)
    metrics_parser.add_argument('--reference', type=Path)
    metrics_parser.add_argument('--patches', type=Path)
    metrics_parser.add_argument('--dictionary', type=Path)
    metrics_parser.add_argument('--coefs', type=Path)
    metrics_parser.add_argument('--lambda', dest='lam', type=float)

    return parser


def configure_logging(verbose: int) -> None:
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = getattr(logging, os.getenv('SOUP_LOG_LEVEL', 'WARNING').upper(), logging.WARNING)
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s', force=True)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    try:
        fft_workers()
    except ParameterError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE

    configure_logging(args.verbose)
    overrides = {k: v for k, v in vars(args).items() if k not in _META}

    try:
        experiment = load_experiment(args.command, args.config, overrides)
    except (ConfigError, ValidationError) as e:
        print(f"❌ Invalid configuration for '{args.command}':\n{e}", file=sys.stderr)
        return EXIT_USAGE

    print(f"🔍 SOUP {args.command} - starting (seed {experiment.seed})...\n")
    try:
        manifest = COMMANDS[args.command](experiment)
    except ValidationError as e:
        print(f"❌ Invalid parameters:\n{e}", file=sys.stderr)
        return EXIT_USAGE
    except (SoupError, OSError) as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"✅ {args.command} complete.")
    print(RunReporter.generate_cli_report(manifest))
    print(f"📄 Manifest saved to: {manifest.artifacts['manifest']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
