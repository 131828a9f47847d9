"""Provenance-graph host intrusion detection at desk scale.

Pipeline: audit logs -> provenance graph -> semantic + spectral node
features -> graph-transformer pretraining -> random-walk intent sequences
-> reconstruction-error detection -> clustered alert graphs.
"""

__version__ = "0.1.0"
