"""Quantum noise spectra of a Fabry-Perot cavity whose movable mirror is read
out piezoelectrically, with electro-optic feedback of the measured current."""
from .model import (CONST, ClassicalBathWarning, ConfigError, DerivedParams,
                    PhysicalConfig, QNDConditionError, ResponseSet,
                    SplitTemperatureError, chi0, chi_eff, derive_params, f_fb,
                    gain, impedance_bare, impedance_eff, response_set)
from .spectra import (ClosedLoopSingularError, FeedbackSetting, SpectraRow,
                      closed_form_rows, lambda_opt)

__version__ = "0.1.0"

__all__ = [
    "CONST", "ClassicalBathWarning", "ClosedLoopSingularError", "ConfigError",
    "DerivedParams", "FeedbackSetting", "PhysicalConfig", "QNDConditionError",
    "ResponseSet", "SpectraRow", "SplitTemperatureError", "chi0", "chi_eff",
    "closed_form_rows", "derive_params", "f_fb", "gain", "impedance_bare",
    "impedance_eff", "lambda_opt", "response_set",
]
