import logging
from pathlib import Path

from wgpulse.settings import SETTINGS

PLOT_SCRIPT_NAME = "plot_results.py"


def render_plot_script(engines, title, script_name=PLOT_SCRIPT_NAME):
    """
    Fill in the plot script template.

    The generated script only imports pandas and matplotlib and only reads the CSV files of the
    run, so producing it never requires a plotting library.
    """
    from wgpulse import __version__

    template = (Path(__file__).parent / "resources" / "plot_template.txt").read_text(encoding='utf-8')
    return template.format(
        version=__version__,
        script_name=script_name,
        time_column=SETTINGS.CSV.time_column,
        omega_column=SETTINGS.CSV.omega_column,
        engines=repr(list(engines)),
        title=title.replace('"', "'"),
    )


def write_plot_script(out_dir, engines, title):
    path = Path(out_dir) / PLOT_SCRIPT_NAME
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(render_plot_script(engines, title))
    path.chmod(0o755)
    logging.verbose(f"Wrote plot script {path}.")
    return path
