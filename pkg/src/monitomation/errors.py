"""Shared exception base for the whole package.

Every typed error raised by a module derives from :class:`MonitomationError`;
the gateway and CLI report errors by class name, so subclasses keep the
names stable.
"""


class MonitomationError(Exception):
    """Base class for all typed errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


class SizeError(MonitomationError):
    """A payload or PSDU exceeds its structural size cap."""
