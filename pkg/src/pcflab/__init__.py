"""pcflab: a numerical laboratory for pluriclosed flow.

Modules
-------
geometry     Chern connection quantities of sampled Hermitian metrics
torus        grids, spectral derivatives, initial data and snapshot files
flow         RK4 integration of the metric flow and its reduced potential
homogeneous  invariant metrics on Lie algebras: ODE flow and SKT scans
monitors     evolution-identity residuals and maximum-principle verdicts
config, cli  experiment files and the ``pcflab`` command
"""

__version__ = "0.1.0"
