"""Online welfare maximization: allocation policies on hard instance
families, LP relaxations and analytic bounds, and a seeded Monte Carlo
verification harness."""

__version__ = "0.1.0"
