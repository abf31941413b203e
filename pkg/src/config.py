"""Configuration loader for the curve fitting toolkit."""

import logging
import os
from typing import Dict, List

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


class Config:
    """Application configuration."""

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE: str = os.getenv("LOG_FILE", "")

    # Solver defaults (overridable per invocation)
    FIT_MAX_ITERATIONS: int = int(os.getenv("FIT_MAX_ITERATIONS", "200"))
    FIT_COST_TOLERANCE: float = float(os.getenv("FIT_COST_TOLERANCE", "1e-10"))
    FIT_PARAM_TOLERANCE: float = float(os.getenv("FIT_PARAM_TOLERANCE", "1e-10"))
    FIT_INITIAL_DAMPING: float = float(os.getenv("FIT_INITIAL_DAMPING", "1e-3"))
    FIT_DAMPING_UP: float = float(os.getenv("FIT_DAMPING_UP", "10"))
    FIT_DAMPING_DOWN: float = float(os.getenv("FIT_DAMPING_DOWN", "10"))
    FIT_MAX_DAMPING: float = float(os.getenv("FIT_MAX_DAMPING", "1e12"))
    FIT_STARTS: int = int(os.getenv("FIT_STARTS", "20"))
    FIT_PERTURBATION_SCALE: float = float(os.getenv("FIT_PERTURBATION_SCALE", "0.5"))
    FIT_SEED: int = int(os.getenv("FIT_SEED", "0"))

    # Scenarios
    POLE_EPSILON: float = float(os.getenv("POLE_EPSILON", "1e-9"))
    RK4_STEP: float = float(os.getenv("RK4_STEP", "1e-3"))

    # Output & performance
    CURVE_STEPS: int = int(os.getenv("CURVE_STEPS", "200"))
    MAX_CONCURRENT_FITS: int = int(os.getenv("MAX_CONCURRENT_FITS", "4"))

    @classmethod
    def solver_defaults(cls) -> Dict[str, float]:
        """Solver settings keyed by FitOptions field name.

        Returns:
            Dict used to seed FitOptions defaults.
        """
        return {
            "max_iterations": cls.FIT_MAX_ITERATIONS,
            "cost_tolerance": cls.FIT_COST_TOLERANCE,
            "param_tolerance": cls.FIT_PARAM_TOLERANCE,
            "initial_damping": cls.FIT_INITIAL_DAMPING,
            "damping_up_factor": cls.FIT_DAMPING_UP,
            "damping_down_factor": cls.FIT_DAMPING_DOWN,
            "max_damping": cls.FIT_MAX_DAMPING,
            "starts": cls.FIT_STARTS,
            "perturbation_scale": cls.FIT_PERTURBATION_SCALE,
            "seed": cls.FIT_SEED,
        }

    @classmethod
    def validate(cls) -> bool:
        """Validate numeric configuration."""
        problems: List[str] = [
            name for name, value in cls.solver_defaults().items()
            if name != "seed" and value <= 0
        ]
        if cls.POLE_EPSILON <= 0:
            problems.append("POLE_EPSILON")
        if cls.RK4_STEP <= 0:
            problems.append("RK4_STEP")
        if cls.CURVE_STEPS < 2:
            problems.append("CURVE_STEPS")
        if cls.MAX_CONCURRENT_FITS < 1:
            problems.append("MAX_CONCURRENT_FITS")

        for name in problems:
            logger.warning(f"Configuration value {name} is out of range - falling back to per-call validation")

        return not problems


# Global config instance
config = Config()
