"""Crypto-API misuse detection, sensitive-flow tracing and app risk scoring.

Typical use::

    from cryptorisk import load_program, detect, annotate, AppRiskReport

    program = load_program("app.json")
    tuples = annotate(detect(program), program)
    report = AppRiskReport.build(program.app_id, tuples, ("CG", "CC", "BI"), ("BI",))
"""

from cryptorisk.adapters import ChainValidation, load_report, merge_and_dedup, parse_report, validate_chain
from cryptorisk.appir import Loc, Program, ProgramBuilder, dump_program, load_program, parse_program
from cryptorisk.dataflow import TaintConfig, TaintFlow, annotate, annotate_with_flows, ds_track, refine_sources, taint_connect
from cryptorisk.detector import detect
from cryptorisk.errors import CryptoRiskError, DomainError, InvariantViolation, ParseError
from cryptorisk.misuse import MisuseTuple
from cryptorisk.risk import AppRiskReport, risk_value, vote
from cryptorisk.taxonomy import Taxonomy, default_taxonomy, load_taxonomy

__version__ = "0.1.0"

__all__ = [
    "AppRiskReport",
    "ChainValidation",
    "CryptoRiskError",
    "DomainError",
    "InvariantViolation",
    "Loc",
    "MisuseTuple",
    "ParseError",
    "Program",
    "ProgramBuilder",
    "TaintConfig",
    "TaintFlow",
    "Taxonomy",
    "annotate",
    "annotate_with_flows",
    "default_taxonomy",
    "detect",
    "ds_track",
    "dump_program",
    "load_program",
    "load_report",
    "load_taxonomy",
    "merge_and_dedup",
    "parse_program",
    "parse_report",
    "refine_sources",
    "risk_value",
    "taint_connect",
    "validate_chain",
    "vote",
]
