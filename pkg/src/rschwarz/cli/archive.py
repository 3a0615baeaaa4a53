"""Binary archive of compressed patch maps.

Layout: the magic `RSWZ1`, then one record per map: a little-endian header
`patch_id u32, m u32, n u32, k u32, seed u64, fingerprint 32 bytes`,
followed by U (m x k), S (k) and V (n x k) as little-endian float64 in
column-major order.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rschwarz.core.context.context import fingerprint_diff
from rschwarz.core.errors import FingerprintMismatch, ParseError
from rschwarz.core.logging.logging import get_logger
from rschwarz.core.lowrank import SVDTriple
from rschwarz.core.schwarz import ReducedMap
from rschwarz.core.util.files import atomic_write_bytes

logger = get_logger("archive")

MAGIC = b"RSWZ1"
RECORD_HEADER = struct.Struct("<IIIIQ32s")
_F8 = np.dtype("<f8")


def _pack(array: np.ndarray) -> bytes:
    return np.asarray(array, dtype=_F8).tobytes(order="F")


@dataclass(eq=False)
class MapArchive:
    """All reduced maps of one configuration."""

    maps: list[ReducedMap]

    @property
    def fingerprint(self) -> bytes | None:
        return self.maps[0].grid_fingerprint if self.maps else None

    def to_bytes(self) -> bytes:
        parts = [MAGIC]
        for m in self.maps:
            rows, cols = m.triple.shape
            parts.append(
                RECORD_HEADER.pack(
                    m.patch_id, rows, cols, m.triple.rank, m.seed, m.grid_fingerprint
                )
            )
            parts.extend((_pack(m.triple.U), _pack(m.triple.S), _pack(m.triple.V)))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MapArchive":
        """Parse archive bytes.

        Raises:
            ParseError: On a bad magic or a truncated record.
        """
        if not data.startswith(MAGIC):
            raise ParseError("not a map archive (bad magic)")
        view = memoryview(data)
        offset = len(MAGIC)
        maps = []
        while offset < len(data):
            if offset + RECORD_HEADER.size > len(data):
                raise ParseError(f"truncated record header at byte {offset}")
            patch_id, rows, cols, k, seed, fp = RECORD_HEADER.unpack_from(view, offset)
            offset += RECORD_HEADER.size
            counts = (rows * k, k, cols * k)
            end = offset + _F8.itemsize * sum(counts)
            if end > len(data):
                raise ParseError(f"truncated factors of patch {patch_id}")
            arrays = []
            for count in counts:
                arrays.append(np.frombuffer(view, dtype=_F8, count=count, offset=offset))
                offset += _F8.itemsize * count
            u = arrays[0].reshape((rows, k), order="F").astype(float)
            s = arrays[1].astype(float)
            v = arrays[2].reshape((cols, k), order="F").astype(float)
            maps.append(
                ReducedMap(
                    patch_id=patch_id,
                    triple=SVDTriple(u, s, v, seed=seed),
                    k=k,
                    seed=seed,
                    grid_fingerprint=fp,
                )
            )
        return cls(maps)

    def save(self, path: str | Path) -> Path:
        path = atomic_write_bytes(path, self.to_bytes())
        logger.info("Saved map archive", path=str(path), maps=len(self.maps))
        return path

    @classmethod
    def load(cls, path: str | Path, expected: bytes | None = None) -> "MapArchive":
        """Read an archive, optionally checking every map against a fingerprint.

        Raises:
            ParseError: If the file cannot be read or parsed.
            FingerprintMismatch: If a stored fingerprint differs from `expected`.
        """
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            raise ParseError(f"cannot read archive {path}: {e}") from e
        archive = cls.from_bytes(data)
        if expected is not None:
            for m in archive.maps:
                if m.grid_fingerprint != expected:
                    differing = ", ".join(fingerprint_diff(expected, m.grid_fingerprint))
                    raise FingerprintMismatch(
                        f"archive {path} was built for a different configuration "
                        f"(differs in: {differing})"
                    )
        logger.info("Loaded map archive", path=str(path), maps=len(archive.maps))
        return archive
