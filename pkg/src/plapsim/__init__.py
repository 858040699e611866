"""Spectral-Galerkin simulation and estimate auditing for the singular p-Laplacian flow."""

__version__ = "0.1.0"
