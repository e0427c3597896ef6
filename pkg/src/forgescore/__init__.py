"""forgescore: anomaly scoring, rank-based pseudo-labeling, dual-branch
fusion classification and review tooling for generated-video forensics."""

__version__ = "0.1.0"
