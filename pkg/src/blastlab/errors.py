"""Exception types shared across the package.

The CLI maps these onto process exit codes, so each carries a fixed
``exit_code`` attribute.
"""

from __future__ import annotations


class BlastLabError(Exception):
    exit_code = 1


class ContractError(BlastLabError):
    """A caller violated a documented precondition."""

    exit_code = 1


class DimensionError(ContractError, ValueError):
    """Operand shapes do not line up.

    ``op`` names the operation, ``expected`` and ``got`` carry the offending
    shapes so the message can be reconstructed by callers.
    """

    def __init__(self, op: str, expected, got, detail: str = ""):
        self.op = op
        self.expected = expected
        self.got = got
        msg = f"{op}: expected {expected}, got {got}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ConfigError(BlastLabError, ValueError):
    """Invalid configuration. ``path`` is the dotted field path when known."""

    exit_code = 2

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class MissingArtifactError(BlastLabError):
    """An upstream artifact is absent; ``producer`` names the subcommand that makes it."""

    exit_code = 3

    def __init__(self, artifact: str, producer: str):
        self.artifact = artifact
        self.producer = producer
        super().__init__(f"missing artifact {artifact!r}; run `{producer}` first")


class DivergenceError(BlastLabError, FloatingPointError):
    """A loss or gradient became non-finite."""

    exit_code = 4
