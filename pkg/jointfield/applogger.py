# ********************************************
# |docname| - The jointfield logger
# ********************************************
# Every module logs through ``jflogger``. What each level carries:
#
# ``DEBUG``
#   One line per SGD step, per global-net epoch and per inner iteration, with its energies; also conjugate-gradient iteration counts.
# ``INFO``
#   Boundaries: the end of global-net training, each alternation phase and each pyramid level, plus files written.
# ``WARNING``
#   Fallbacks that still produce a result, such as an inner iteration whose solve failed to lower the energy.
# ``ERROR``
#   The loss or solver failure behind a non-zero exit code.
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
import logging
import sys

# Third-party imports
# -------------------
# None.
#
# Local application imports
# -------------------------
# None. `config.py` imports this module, then lowers the level to the one its `Settings` select.
#
#
# Logging
# =======
jflogger = logging.getLogger("jointfield")
jflogger.setLevel(logging.DEBUG)

# Command output goes through ``click.echo``; the log shares stdout with it.
handler = logging.StreamHandler(sys.stdout)
handler.setLevel(logging.DEBUG)
handler.setFormatter(logging.Formatter("%(levelname)s - %(asctime)s - %(funcName)s - %(message)s"))
jflogger.addHandler(handler)

# ``--verbose`` on any subcommand, or ``JOINTFIELD_LOG_LEVEL=DEBUG``, shows the per-step lines.
