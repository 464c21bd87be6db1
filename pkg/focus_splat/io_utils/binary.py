import struct
from typing import Tuple

import numpy as np

from focus_splat.errors import FormatError


class ByteReader:
    """
    Lecteur séquentiel little-endian sur un tampon d'octets.

    Ne lit jamais au-delà de la fin du tampon : toute lecture trop longue
    lève une FormatError au lieu de renvoyer des données partielles.
    """

    def __init__(self, data: bytes, label: str = "flux"):
        self.data = bytes(data)
        self.pos = 0
        self.label = label

    def _need(self, size: int) -> None:
        if self.pos + size > len(self.data):
            raise FormatError(
                f"{self.label}: flux tronqué (besoin de {size} octets à la position "
                f"{self.pos}, {len(self.data) - self.pos} disponibles)"
            )

    def unpack(self, fmt: str) -> Tuple:
        """
        Décode une structure au format `struct` (préfixe '<' ajouté)

        Args:
            fmt: Le format struct sans indicateur d'ordre

        Returns:
            Tuple: Les valeurs décodées
        """
        layout = struct.Struct("<" + fmt)
        self._need(layout.size)
        values = layout.unpack_from(self.data, self.pos)
        self.pos += layout.size
        return values

    def u64(self) -> int:
        return self.unpack("Q")[0]

    def cstring(self) -> bytes:
        """Lit une chaîne terminée par un octet nul (le zéro est consommé)"""
        end = self.data.find(b"\x00", self.pos)
        if end < 0:
            raise FormatError(f"{self.label}: nom non terminé à la position {self.pos}")
        raw = self.data[self.pos:end]
        self.pos = end + 1
        return raw

    def array(self, dtype, count: int) -> np.ndarray:
        """
        Lit `count` enregistrements d'un dtype numpy sans copie intermédiaire

        Returns:
            np.ndarray: Vue en lecture seule sur le tampon
        """
        dtype = np.dtype(dtype)
        self._need(dtype.itemsize * count)
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos)
        self.pos += dtype.itemsize * count
        return out

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.label}: {len(self.data) - self.pos} octets en trop après le dernier enregistrement"
            )


def pack(fmt: str, *values) -> bytes:
    """Encode des valeurs en little-endian"""
    return struct.pack("<" + fmt, *values)
