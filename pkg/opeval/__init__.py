"""Off-policy evaluation by classification: OPC, SoftOPC and baseline metrics."""

__version__ = "0.3.0"
