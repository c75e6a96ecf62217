"""Single-agent backdoor leverage attack laboratory for cooperative MARL."""

__version__ = "0.1.0"
