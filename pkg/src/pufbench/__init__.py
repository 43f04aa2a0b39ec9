"""Simulation and modeling-attack workbench for OR/AND/XOR compositions of arbiter PUFs."""
from .puf import ApufInstance, OaxPuf, eval_apuf, eval_oax, sample_apuf, transform_challenge
from .rng import RngSeed

__version__ = "0.1.0"

__all__ = ["ApufInstance", "OaxPuf", "RngSeed", "eval_apuf", "eval_oax", "sample_apuf", "transform_challenge"]
