"""mach-lite: a small tensor DSL compiled onto a spatial processor fabric.

The pipeline runs source text through parsing and type checking, builds an
execution-ordered IR graph, plans static per-tile memory, lowers to per-role
programs for the virtual machine, and runs either a unified-memory reference
interpreter or a cycle-stepped simulator of the whole tile grid.
"""
from .diagnostics import CompileError, Diagnostic, SimFault
from .pipeline import Bundle, check, compile_source, run_machine, run_reference
from .sim import DeadlockError, Machine, SimConfig

__version__ = "0.1.0"

__all__ = [
    "Bundle", "compile_source", "check", "run_machine", "run_reference",
    "Machine", "SimConfig", "DeadlockError",
    "CompileError", "Diagnostic", "SimFault",
    "__version__",
]
