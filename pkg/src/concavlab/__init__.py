"""Concavity laboratory for semilinear anisotropic elliptic Dirichlet problems.

Solve ``-alpha^{ij} D_ij u = f(x, u)`` on planar convex domains, measure how far
power or logarithmic transforms of the solution are from concave, and audit
the measured deficits against the stability bounds for nearly constant
coefficients.
"""

from .coefficients import TEMPLATES, CoefficientSet, Expression
from .concavity import (DeficitReport, Triple, boundary_audit, concavity_fn,
                        harmonic_concavity_fn, joint_concavity_fn, max_deficit,
                        numerical_floor)
from .envelope import EnvelopeResult, concave_envelope, hyers_ulam_witness
from .errors import *  # noqa: F401,F403
from .fields import (Grid, ScalarField, read_field, transform_log, transform_power,
                     write_field)
from .geometry import Disk, Ellipse, InnerParallelSet, Square, Superellipse, inner_parallel
from .harness import ExperimentConfig, SweepReport, run_baselines, run_sweep
from .solver import (EigenPerturbed, Phi, Power, ProblemSpec, manufactured_convergence,
                     solve)
from .verifier import audit_instance, audit_propositions, audit_remark_noconc

__version__ = "0.1.0"
