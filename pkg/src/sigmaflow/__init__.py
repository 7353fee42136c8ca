"""Numerical toolkit for the sigma_2 Yamabe problem on rotationally symmetric spheres."""

from sigmaflow.errors import ConeViolation, QuadratureError, SigmaFlowError, StepFailure

__version__ = "0.1.0"

__all__ = ["ConeViolation", "QuadratureError", "SigmaFlowError", "StepFailure", "__version__"]
