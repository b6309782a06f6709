"""CEIR: the small typed three-address program form all analyses run on."""

from cryptorisk.appir.analysis import (
    NON_CONSTANT,
    ConstantPropagation,
    NonConstant,
    ReachingDefinitions,
    backward_slice,
    call_sites_of,
    constant_arg,
)
from cryptorisk.appir.builder import ProgramBuilder
from cryptorisk.appir.ceir import dump_program, load_program, parse_program, program_to_json
from cryptorisk.appir.model import (
    Assign,
    Branch,
    Call,
    ClassDef,
    Const,
    FieldLoad,
    FieldStore,
    Goto,
    Local,
    Loc,
    MethodDef,
    Program,
    Return,
    Statement,
    split_signature,
)

__all__ = [
    "NON_CONSTANT",
    "Assign",
    "Branch",
    "Call",
    "ClassDef",
    "Const",
    "ConstantPropagation",
    "FieldLoad",
    "FieldStore",
    "Goto",
    "Loc",
    "Local",
    "MethodDef",
    "NonConstant",
    "Program",
    "ProgramBuilder",
    "ReachingDefinitions",
    "Return",
    "Statement",
    "backward_slice",
    "call_sites_of",
    "constant_arg",
    "dump_program",
    "load_program",
    "parse_program",
    "program_to_json",
    "split_signature",
]
