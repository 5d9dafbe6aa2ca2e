"""ltleb: liveness verification for Event-B-style machines over hereditarily finite sets."""

__version__ = "0.1.0"
