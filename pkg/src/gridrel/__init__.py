"""Sequential Monte Carlo reliability simulation for radial distribution
networks with an attached microgrid."""

__version__ = "0.1.0"
