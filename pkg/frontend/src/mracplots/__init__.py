"""Figure generation for mracsim traces, coupled only through the CSV schema."""

__version__ = "0.1.0"

from .panels import PANELS, PlotSpec, render
from .reader import Trace, TraceError, read_trace
