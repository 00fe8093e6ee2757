"""In-process configuration store.

A reliable, wait-free, linearizable object holding the chain of introduced
configurations.  In the simulator every operation executes as a single
scheduler step, so linearizability is by construction; a networked client
would have to provide the same three operations.
"""

from __future__ import annotations

from typing import Callable, Optional

from .model import Configuration


class ConfigServiceError(Exception):
    """Caller bug surfaced by the store: bad epoch argument or unknown epoch."""


class ConfigStore:
    """Map epoch -> configuration with an atomic compare-and-swap on the last epoch.

    ``on_introduction(by, config)`` is invoked exactly once per successfully
    stored configuration, at the swap itself.
    """

    def __init__(self, on_introduction: Optional[Callable[[int, Configuration], None]] = None):
        self._entries: dict[int, Configuration] = {}
        self._last_epoch: Optional[int] = None
        self._on_introduction = on_introduction

    def seed_initial(self, config: Configuration) -> None:
        """Pre-seed the bootstrap configuration at run start (no introduction upcall;
        the harness records the bootstrap introduction itself)."""
        if self._entries:
            raise ConfigServiceError("store already seeded")
        self._entries[config.epoch] = config
        self._last_epoch = config.epoch

    def compare_and_swap(self, expected: int, config: Configuration, by: int) -> bool:
        if config.epoch <= expected:
            raise ConfigServiceError(
                f"new epoch {config.epoch} must exceed expected epoch {expected}"
            )
        if self._last_epoch != expected:
            return False
        self._entries[config.epoch] = config
        self._last_epoch = config.epoch
        if self._on_introduction is not None:
            self._on_introduction(by, config)
        return True

    def get_last_epoch(self) -> int:
        if self._last_epoch is None:
            raise ConfigServiceError("store not seeded")
        return self._last_epoch

    def get_members(self, epoch: int) -> frozenset[int]:
        try:
            return self._entries[epoch].members
        except KeyError:
            raise ConfigServiceError(f"epoch {epoch} was never introduced") from None

    def get_config(self, epoch: int) -> Configuration:
        try:
            return self._entries[epoch]
        except KeyError:
            raise ConfigServiceError(f"epoch {epoch} was never introduced") from None

    def known_epochs(self) -> list[int]:
        return sorted(self._entries)
