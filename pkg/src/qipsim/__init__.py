"""Dense simulation of short quantum interactive proofs and their single-proof verifier."""

__version__ = "0.1.0"
