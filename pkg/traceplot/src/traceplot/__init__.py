"""Figure generation from solver trace CSVs."""

from .plotting import PlotResult, PlotSpec, Series, plot_traces
from .traces import SchemaError, Trace, load_trace

__version__ = "0.1.0"
