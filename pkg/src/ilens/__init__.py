"""AND-OR interaction decomposition of black-box scalar models.

The toolkit evaluates a model on every subset of a small variable set,
splits the resulting table into sparse AND-type and OR-type interaction
effects, and provides order-distribution statistics, parametric fits,
generalization metrics, desk-scale models, and a reporting CLI on top.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    distributions,
    errors,
    extraction,
    generalization,
    model_zoo,
    parametric,
    subset_lattice,
    value_table,
)

# plots and cli are imported lazily by the console script; importing them
# here would drag matplotlib into every library use.
