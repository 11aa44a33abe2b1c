"""Characteristic-based numerics for geometric blow-up of 2D quasi-linear
wave equations: profiles, closed-form and integrated characteristics,
log-Sobolev and singular-kernel norms, and rate fitting."""

from .params import (DomainError, FitWindowError, ModelParams, NoBlowupError, ParameterError,
                     ResolutionError, SingularityError)
from .profiles import build_chi, build_cutoffs, build_psi, in_omega0
from .characteristics import (BlowupReport, ClosedFormCharacteristics,
                              detect_blowup_closed_form, sandwich_estimates_audit)
from .transport import (CharacteristicField, derivative_bound_audit, detect_blowup_numeric,
                        integrate, make_perturbation, make_source)
from .norms import (GridFunction, NormSpec, kernel_form, multiplier_embedding_check,
                    spectral_norm, windowed_I)
from .blowup import NormSeries, RateFit, decomposition_audit, epsilon_sweep, fit_rate

__version__ = "0.1.0"
