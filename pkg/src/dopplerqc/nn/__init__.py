"""Self-contained tensor layer stack: CNN + GRU + attention classifier.

Forward semantics follow the gate equations exactly; every layer has a
hand-derived analytic backward pass (no autodiff). Training runs in
float64 by default; inference may run in float32.
"""

from .model import Model, ModelConfig, init_weights, predict_class  # noqa: F401
from .weights_io import load_weights, save_weights  # noqa: F401
