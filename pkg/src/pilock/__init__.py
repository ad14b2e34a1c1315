"""pilock: a workbench for the lock-typed asynchronous pi-calculi.

Parse, type-check, execute, exhaustively verify deadlock- and leak-freedom,
and decide weak typed bisimilarity on finite ccsl / pil / pilw processes.
"""

from .syntax import Calculus

__all__ = ["Calculus"]
__version__ = "0.1.0"
