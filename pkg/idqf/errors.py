"""
IDQF Forwarding Simulator - Error Types
Exceptions raised by the services and mapped to exit codes by the commands.
"""

from typing import Optional


class IdqfError(Exception):
    """Base class for simulator errors."""


class ConfigError(IdqfError):
    """Invalid scenario, topology, checkpoint or scheduling request."""


class TopologyError(ConfigError):
    """Topology text or graph that cannot be used."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DivergenceError(IdqfError):
    """Training produced a non-finite loss or non-finite parameters."""

    def __init__(
        self,
        message: str,
        node_id: Optional[int] = None,
        episode: Optional[int] = None,
    ):
        self.reason = message
        self.node_id = node_id
        self.episode = episode
        where = []
        if episode is not None:
            where.append(f"episode {episode}")
        if node_id is not None:
            where.append(f"agent N{node_id}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
