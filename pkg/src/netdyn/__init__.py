"""Networked-dynamics modeling from irregularly sampled, partially
observed time series: ground-truth simulation, graph-neural-ODE
imputation with reliability and time-aware gating, decay-weighted
prediction training, and a benchmark harness."""

__version__ = "0.1.0"
