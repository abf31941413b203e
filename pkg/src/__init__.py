"""Package initialization file."""

__version__ = "1.0.0"
__author__ = "ODE Curve Fitting Toolkit"
__description__ = "Scenario generation, nonlinear least-squares fitting and model selection for ODE case studies"
