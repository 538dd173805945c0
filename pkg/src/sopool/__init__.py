"""Graph classification with HᵀH-based poolings on a small reverse-mode autodiff core.

Modules: ``autograd`` (tensors, tape, optimiser), ``graphdata`` (TUDataset
parsing, features, folds), ``layers`` (GIN variants), ``pooling``,
``trainer`` (models and cross-validation), ``distinguish`` (collision
search), ``gradcheck`` and ``cli``.
"""
from sopool.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
