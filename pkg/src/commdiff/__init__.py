"""High-precision computational toolkit for commuting interval diffeomorphisms.

Core objects: truncated-Taylor jets over arbitrary-precision reals, smooth
maps and vector fields on a closed interval (expression trees with a flat(.)
primitive and declared endpoint flatness), flows by an adaptive Taylor
method, generating ("Szekeres") vector fields of diffeomorphisms with their
translation-number calculus, the boundary-smoothing pipeline producing clean
flow approximations of commuting pairs, the derivative-estimate suites, and
rotation-number/lattice support for circle actions.
"""

from .precision import (DEFAULT_PRECISION, JET_ORDER_CAP, R, get_precision,
                        set_precision, working_precision)
from .jets import Jet, JetDomainError, JetError, JetMismatchError, jet_compose, jet_invert
from .parser import ParseError, parse_expression
from .maps import (BlendDiffeo, ComposeDiffeo, Diffeo, DomainError, ExprDiffeo,
                   ExprField, IdentityDiffeo, InverseDiffeo, PowerDiffeo,
                   SmoothMap, VectorField, parse_map)
from .flow import FlowDiffeo, FlowError, flow_jet, flow_logdf_jet, flow_map, flow_value
from .analysis import (FixedPointReport, ck_dist, ck_norm, commutation_residual,
                       fixed_points, invert_at, iterate)
from .fixtures import fixture, fixture_from_config
from .szekeres import (InconsistentTauError, NonConvergedError,
                       PairClassification, PairPreconditionError, SzekeresField,
                       classify_pair, path_to_identity, pullback, szekeres_dvalue,
                       szekeres_field, szekeres_higher, szekeres_value,
                       translation_time)
from .smoothing import (EtaNotMetError, NiceX0, NiceX0NotFoundError,
                        PsiNotMonotoneError, SmoothedField, approximate_clean,
                        build_smoothed, find_nice_x0, verify_smallness)
from .polynomials import (IntPolynomial, alpha_beta, check_star_identity,
                          recursion_polynomials)
from .estimates import (EstimateReport, check_En_exponent, check_equivalence_lemma,
                        check_flat_norm_lemma, check_ratio_lemma, check_series_phi,
                        mu_phi_values)
from .circle import CircleLift, LatticeBasis, lattice_basis, parse_lift, rotation_number

set_precision(DEFAULT_PRECISION)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
