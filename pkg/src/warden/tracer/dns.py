"""Reverse mapping from resolved IP addresses back to their origin domains."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


@dataclass
class DnsMappingTable:
    """Latest-wins table of address -> (domain, resolution timestamp)."""

    _entries: dict = field(default_factory=dict)

    def record(self, domain: str, addresses, ts: float) -> None:
        for address in addresses:
            self._entries[address] = (domain, ts)

    def lookup(self, address: str) -> Optional[str]:
        entry = self._entries.get(address)
        return entry[0] if entry else None

    def __len__(self) -> int:
        return len(self._entries)
