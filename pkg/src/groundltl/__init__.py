"""Weakly supervised grounding of English commands in LTL over finite traces."""

from .automata import Automaton, accepts, compile, equivalent
from .ltl import Formula, decode_postorder, encode_postorder, from_text, to_text

__all__ = [
    "Automaton",
    "Formula",
    "accepts",
    "compile",
    "decode_postorder",
    "encode_postorder",
    "equivalent",
    "from_text",
    "to_text",
]
__version__ = "0.1.0"
