"""Desk-scale construction and verification of C1-smooth, Lipschitz-controlled
extensions of functions given on closed subsets of a box, with sampling audits
for every quantitative guarantee.
"""

from .core import (AuditError, ClosedSet, Constants, JetData, NetBackedField,
                   ScalarField, WorkingDomain, dist_to_set, estimate_lip,
                   make_constants, mcshane_extend, sampled_lip, snap_to_net)
from .covering import (BallUnion, ComplementRegion, CoverRefinement, OpenCover,
                       PartitionOfUnity, build_partition, rudin_refine,
                       smoothstep)
from .engine import (ExtensionResult, GateFailure, OscillationProfile,
                     StageFailure, check_condition_E, extend_from_convex_set,
                     extend_from_jets, extend_from_subspace,
                     separating_function)
from .approx import (approx_keep_restriction, approx_keep_restriction_lipschitz,
                     SeparationTooSmallError)
from .smoothing import (SmoothingReport, moreau_inf, moreau_sup,
                        smooth_continuous_approx, smooth_lipschitz_approx)
from .taylor import (OscillationCover, approximate_with_derivative_control,
                     approximate_with_jet_control, oscillation_cover)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
