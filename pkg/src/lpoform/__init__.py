"""Multi-vehicle formation-flight guidance on libration point orbits."""

__version__ = "0.1.0"
