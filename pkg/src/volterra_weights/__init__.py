"""Weighted L2 boundedness of Volterra operators with polynomial-in-t kernels."""

from .expr import (DomainError, EvaluationError, Expression, ExpressionError, ExpressionTooLarge,
                   ParseError, differentiate, evaluate, multiply_by_power, parse)
from .gram import (DivergentMoment, GramProfile, MomentMatrix, NotPositiveDefinite, lemma1_scan,
                   moment_matrix, subspace_angle, volume_ratio)
from .hardy import (DoublingReport, HardyResult, SamplingConfig, SearchConfig, doubling_constant,
                    hardy_constant, hardy_profile, s_k)
from .multiplier import (MultiplierProblem, MultiplierReport, condition6, condition7, condition8,
                         lemma2_residual, lemma2_sides, multiplier_verdict,
                         operator_from_multiplier, operator_route)
from .operator import (DEFAULT_LADDER, GridSpec, NormEstimate, OperatorSpec, SplittingReport,
                       apply, discretize, ladder_norm, norm_estimate, splitting_report)
from .quadrature import (IntegralResult, QuadratureError, Status, integrate, integrate_finite,
                         integrate_tail, weighted_l2_norm)

__version__ = "0.1.0"
