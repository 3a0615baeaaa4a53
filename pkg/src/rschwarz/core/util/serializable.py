"""Module for serializable objects in the system."""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, TypeVar

import msgpack

from rschwarz.core.util.files import atomic_write_bytes

T = TypeVar("T", bound="Serializable")


class Serializable(ABC):
    """Base class for all serializable result objects.

    Subclasses provide a plain-dict view (lists and scalars only); this base
    turns it into msgpack bytes or files.
    """

    @abstractmethod
    def to_dict(self) -> dict[str, Any]:
        """Convert instance to dictionary representation."""
        pass

    @classmethod
    @abstractmethod
    def from_dict(cls: type[T], data: dict[str, Any]) -> T:
        """Create instance from dictionary representation."""
        pass

    def to_msgpack(self, path: Path | None = None) -> bytes:
        """Serialize to msgpack bytes, optionally writing them atomically to `path`."""
        msgpack_bytes = msgpack.packb(self.to_dict(), use_bin_type=True)
        if path:
            atomic_write_bytes(path, msgpack_bytes)
        return msgpack_bytes

    @classmethod
    def from_msgpack(cls: type[T], msgpack_bytes: bytes) -> T:
        """Create instance from msgpack bytes."""
        return cls.from_dict(msgpack.unpackb(msgpack_bytes, raw=False))

    @classmethod
    def from_msgpack_file(cls: type[T], path: Path) -> T:
        """Create instance from msgpack file."""
        return cls.from_msgpack(path.read_bytes())
