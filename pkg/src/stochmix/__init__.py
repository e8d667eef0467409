"""Stochastic-mixture approximate inference between sampling and VI."""

__version__ = "0.1.0"

from .errors import ConfigError, ContractViolation
from .gaussian import Theta
from .mixture import MixtureApprox
from .psi import NoiseBlock, PsiParams
from .targets import TargetModel, make_target

__all__ = ["ConfigError", "ContractViolation", "MixtureApprox", "NoiseBlock", "PsiParams",
           "TargetModel", "Theta", "make_target", "__version__"]
