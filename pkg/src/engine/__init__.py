"""Numerical core: generators, measures, risk fields and the solvers built on them."""
