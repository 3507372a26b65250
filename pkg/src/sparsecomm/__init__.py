"""Communication-constrained estimation of sparse Bernoulli means and
sparsified distributed SGD.

The package has three layers:

* core model and codec: ``model``, ``codec`` -- sampling from the sparse
  Bernoulli family and a bit-exact fixed-width transcript format;
* estimation and sparsification: ``estimator``, ``sparsify``, ``sgdsim`` --
  the unbiased decoder-side mean estimator with its Monte Carlo risk
  harness, the top-r / random-k / rtop-k operator family, and a
  multi-node SGD simulator with error compensation;
* experiment front end: ``harness``, ``cli`` -- config-file driven sweeps
  that persist results as CSV.
"""

from . import codec, estimator, harness, model, objectives, sgdsim, sparsify

__all__ = [
    "codec",
    "estimator",
    "harness",
    "model",
    "objectives",
    "sgdsim",
    "sparsify",
]

__version__ = "0.1.0"
