"""Hub dynamics on heterogeneous directed random networks."""

__version__ = "0.1.0"

from . import dynamics, experiments, graph, measure, reduction  # noqa: E402,F401
