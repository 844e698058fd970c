"""Hybrid-data variational quantum CNNs with one-shot federated distillation.

Modules, from the bottom up: :mod:`qsim` (state-vector simulation),
:mod:`encode` (amplitude encoding), :mod:`complexity` (gate budgets),
:mod:`circuit` (layered convolution/pooling circuits), :mod:`train`,
:mod:`pso` (structure search), :mod:`federation`, :mod:`data`,
:mod:`config` and :mod:`cli`.
"""

__version__ = "0.1.0"
