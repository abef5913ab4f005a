"""Insider-threat detection toolkit.

Generates CERT-style synthetic activity logs, builds an email friendship
graph and detects employee communities via Louvain modularity, trains one
LSTM autoencoder per employee on binarized activity sequences, and ranks
employees by reconstruction loss.
"""

__version__ = "0.1.0"

from lac.errors import ConfigError, DataError, LacError, NumericError

__all__ = ["ConfigError", "DataError", "LacError", "NumericError", "__version__"]
