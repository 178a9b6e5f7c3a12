"""Continuation solver and verifier for the Kirchhoff problem
-Delta(g(|grad u|_2^2) u + u^r) = a u + b u^p on (0, 1), u = 0 at the ends."""

__version__ = "0.1.0"
