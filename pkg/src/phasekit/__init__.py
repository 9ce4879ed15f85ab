"""phasekit: phase-transition prediction and verification for sparse recovery.

Modules
-------
geometry
    Separable set families (interval atoms), projections, and the l1
    subdifferential / normal-cone construction.
statdim
    Statistical-dimension estimation: closed-form psi curves, Monte-Carlo
    J minimization, exact per-sample estimates, transition windows.
solvers
    Consensus-splitting recovery solver, problem containers, and the exact
    small-instance LP oracle.
experiments
    Phase-transition grids: per-cell trial protocol, checkpoint/resume,
    isotonic crossing detection, CSV/SVG emission.
verify
    Independent-route cross checks (quadrature, alternating projections,
    finite differences); the release gate behind `phasekit verify`.
cli
    Command-line entry points for all of the above.
backend / _np_backend / _kernels
    Hot kernels: compiled extension when built, pure numpy otherwise,
    selected at import time.
"""

__version__ = "0.1.0"
