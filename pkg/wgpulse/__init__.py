from wgpulse.model import *
from wgpulse.analytic import *
from wgpulse.mps_engine import *
from wgpulse.spectra import *

__version__ = '0.1.0'
