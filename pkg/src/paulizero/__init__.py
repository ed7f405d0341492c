"""Numerical laboratory for zero modes of the three-dimensional Pauli operator."""

from .decay import (BootstrapState, DecayEnvelope, RadialSolution, bootstrap_exponents,
                    fit_sphere_norm_decay, integrate_radial_system, propagate_envelopes)
from .fields import (DecayBound, GaugePotential, HypothesisError, MagneticField, ZeroModeTriple,
                     decay_report, derive_pair_from_spinor, divergence, gaussian_swirl, load_field,
                     loss_yau_spinor, loss_yau_triple, lp_norm)
from .gauge import (BiotSavartGauge, BiotSavartQuadrature, Lemma3Constants, NonConvergentTailError,
                    PowerLawDecayFit, biot_savart, curl_residual, fit_decay_exponent,
                    lemma3_envelope)
from .quotient import (CartesianGrid, FormPair, RayleighQuotientMinimizer, RayleighResult,
                       assemble_forms, delta_surrogate, minimize_quotient, zero_mode_residual)
from .spinors import (ChannelBasis, SpinorGrid, SphereQuadrature, TruncationWarning, apply_K,
                      partial_wave_project, radial_factorization_residual, sigma_dot,
                      sphere_norm_derivative_check, spherical_spinor)

__version__ = "0.1.0"
