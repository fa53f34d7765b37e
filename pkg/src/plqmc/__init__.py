"""Low-variance Plackett-Luce estimation with scrambled quasi-Monte Carlo points."""

from plqmc.lowdisc import PointSet, SequenceKind, generate, generate_batch

__version__ = "0.1.0"

__all__ = ["PointSet", "SequenceKind", "generate", "generate_batch", "__version__"]
