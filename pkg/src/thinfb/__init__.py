"""thinfb: a numerical lab for the thin one-phase free boundary problem."""

__version__ = "0.1.0"
SCHEMA_VERSION = "thinfb/1"
