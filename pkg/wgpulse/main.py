import argparse
import json
import logging
import sys

from wgpulse.errors import ArgumentError, EngineError, InputError
from wgpulse.json import NumpyEncoder
from wgpulse.settings import SETTINGS
from wgpulse.simulate import simulate, spectra_job
from wgpulse.sweep import run_sweep
from wgpulse.utils import LoggingFormatter
from wgpulse.verify import verify

VERIFY_FAILED_EXIT_CODE = 1


def positive_int(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{value}'")
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {number}")
    return number


def run_verify(config, out, threads):
    report = verify(config, out=out, threads=threads)
    if not report['passed']:
        sys.exit(VERIFY_FAILED_EXIT_CODE)


def run_sweep_command(kind, photons, tp, engine, dt, out, threads):
    if engine == 'both':
        raise ArgumentError("Sweeps run a single engine, pass --engine analytic or --engine mps.")
    run_sweep(kind=kind, photons=photons, tp_list=tp, engine=engine or 'analytic', dt=dt, out=out,
              threads=threads)


def main():
    parser = argparse.ArgumentParser(
            description="Simulate a two-level emitter in a waveguide driven by one- and two-photon pulses. "
                        "Results are written as CSV files plus a JSON run manifest.",
            formatter_class=argparse.RawTextHelpFormatter,
            add_help=True)
    parser.set_defaults(func=None)
    parser.add_argument(
            '--verbose', '-v', action='store_true',
            help='Display more log messages and progress bars.')

    subparsers = parser.add_subparsers(title="Possible operations")

    parser_simulate = subparsers.add_parser(
            "simulate",
            help="Run a scenario with the analytic and/or the MPS engine and write population and flux CSVs.")
    parser_simulate.set_defaults(func=simulate)

    parser_spectra = subparsers.add_parser(
            "spectra",
            help="Write the time-dependent spectrum, the spectral intensity, the long-time spectrum "
                 "and a plot script for a scenario.")
    parser_spectra.set_defaults(func=spectra_job)

    parser_verify = subparsers.add_parser(
            "verify",
            help="Run the cross-checks between engines, closed forms and exact identities.\n"
                 "Exits with a nonzero code if any check fails.")
    parser_verify.set_defaults(func=run_verify)

    parser_sweep = subparsers.add_parser(
            "sweep",
            help="Peak emitter population versus rectangular pulse length.")
    parser_sweep.add_argument(
            '-k', '--kind', type=str, choices=SETTINGS.EMITTER_KINDS, default='chiral',
            help="Emitter coupling. Default: chiral.")
    parser_sweep.add_argument(
            '-n', '--photons', type=int, nargs='+', default=[1, 2],
            help="Photon numbers to run. R21 is reported when both 1 and 2 are given. Default: 1 2.")
    parser_sweep.add_argument(
            '--tp', type=float, nargs='+', default=list(SETTINGS.SWEEP.tp_list),
            help="Pulse lengths gamma*t_p.")
    parser_sweep.add_argument(
            '--dt', type=float, default=None,
            help=f"Time step gamma*dt. Default: {SETTINGS.GRID.gamma_dt}.")
    parser_sweep.set_defaults(func=run_sweep_command)

    for subparser in [parser_simulate, parser_spectra, parser_verify]:
        subparser.add_argument(
                '-c', '--config', type=str, default=None,
                help="Scenario YAML file or a previous manifest.json."
                     + (" Default: the bundled suite." if subparser is parser_verify else ""))
    for subparser in [parser_simulate, parser_spectra, parser_sweep]:
        subparser.add_argument(
                '-e', '--engine', type=str, choices=SETTINGS.ENGINES + ['both'], default=None,
                help="Engine(s) to run, overriding the config.")
    for subparser in [parser_simulate, parser_spectra, parser_sweep, parser_verify]:
        subparser.add_argument(
                '-o', '--out', type=str, default=None,
                help=f"Output directory. Default: ${SETTINGS.OUTPUT_DIR_ENV} or '{SETTINGS.DEFAULT_OUTPUT_DIR}'.")
        subparser.add_argument(
                '-t', '--threads', type=positive_int, default=1,
                help="Number of workers. Default: 1.")

    command = parser.parse_args()

    # Initialize logging
    hdlr = logging.StreamHandler(sys.stderr)
    hdlr.setFormatter(LoggingFormatter())
    logging.root.addHandler(hdlr)
    if command.verbose:
        logging_level = logging.VERBOSE
    else:
        logging_level = logging.INFO
    logging.root.setLevel(logging_level)

    f = command.func
    if f is None:
        parser.print_usage()
        sys.exit(InputError.exit_code)
    del command.func
    del command.verbose
    try:
        f(**vars(command))
    except InputError as e:
        logging.error(str(e))
        sys.exit(e.exit_code)
    except EngineError as e:
        logging.error(str(e))
        if e.residuals:
            logging.error(f"Residuals: {json.dumps(e.residuals, cls=NumpyEncoder, sort_keys=True)}")
        sys.exit(e.exit_code)


if __name__ == "__main__":
    main()
