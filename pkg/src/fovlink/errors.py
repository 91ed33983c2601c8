"""Common exception base for the fovlink package.

Every fovlink-specific error derives from :class:`FovlinkError` so callers
can catch the whole family at an integration boundary (e.g. the CLI maps
them onto exit codes) while modules keep precise per-failure classes.
"""

from __future__ import annotations


class FovlinkError(Exception):
    """Base class for all errors raised by fovlink modules."""
