"""Exit laws of diffusions in perturbed random environments: simulation and verification toolkit."""
__version__ = "0.1.0"
