"""Downlink network cooperative MIMO system-level simulator.

Subpackages cover scenario/topology generation, 3GPP UMi + Rician channel
modeling, user-centric clustering, weighted-MMSE precoding (centralized,
per-cell, and distributed with inter-cluster leakage pricing), system
metrics (SE / coverage / compute-penalized throughput / energy efficiency),
and reference-path time-frequency synchronization for multicarrier
range/velocity sensing.
"""

__version__ = "0.1.0"
