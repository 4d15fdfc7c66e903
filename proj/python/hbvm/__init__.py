"""Energy-conserving HBVM(k,s) methods and Hamiltonian BVP solvers."""

from ._core import *  # noqa: F401,F403
from ._core import Error, DomainError, ConvergenceError, SingularSystemError  # noqa: F401

__version__ = "0.1.0"
