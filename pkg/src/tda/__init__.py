"""Targeted deep architectures for debiased causal estimation with neural networks."""

__version__ = "0.1.0"

from .estimators import DragonNetATE, SurvivalTDA  # noqa: E402

__all__ = ["DragonNetATE", "SurvivalTDA", "__version__"]
