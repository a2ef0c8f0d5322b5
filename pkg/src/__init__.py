# Import key classes and functions to make them easily accessible
from .analytic_core import TaylorSeries, MatrixTaylorSeries, BoundaryGrid
from .config import ConfigManager, RunConfig
from .factorization import FactorizationResult, factorize, certify
from .hb_space import SchurRow, SymbolPhi, HBReport, hb_norm, phi_coefficients
from .diagnostics import inclusion_report, equals_hardy_report
from .model_library import ModelInstance, model_from_spec, load_model, save_model

__all__ = [
    'TaylorSeries',
    'MatrixTaylorSeries',
    'BoundaryGrid',
    'ConfigManager',
    'RunConfig',
    'FactorizationResult',
    'factorize',
    'certify',
    'SchurRow',
    'SymbolPhi',
    'HBReport',
    'hb_norm',
    'phi_coefficients',
    'inclusion_report',
    'equals_hardy_report',
    'ModelInstance',
    'model_from_spec',
    'load_model',
    'save_model'
]
