"""pdwatch: swept-spectrum RF event monitor with a simulated front end.

A scanning engine tunes a band-limited receiver across a configurable range,
computes power spectra in dBm, records threshold crossings with their IQ
data, stitches full-band diagrams, and ships event artifacts to a remote
store that notifies subscribers.
"""

__version__ = "0.1.0"

from .dsp import Classification, IqFrame, PowerSpectrum  # noqa: F401
from .scene import Burst, CwTone, EmitterScene, PdPulseTrain  # noqa: F401
from .sweep import PdEvent, SweepPlan, StitchedSpectrum  # noqa: F401
