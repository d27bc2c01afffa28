"""
Dependency Injection Container for the MLSG application.

A run needs exactly one assembly cache, one block-system service and one
run store, all tied to the problem chosen on the command line.  The
container builds them lazily, hands out the shared instances, and closes
whatever it built when the command finishes.
"""

from __future__ import annotations

import enum
import logging
import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Union

logger = logging.getLogger(__name__)

Key = Union[str, type]


class Lifetime(enum.Enum):
    SINGLETON = "singleton"
    TRANSIENT = "transient"


@dataclass
class Registration:
    factory: Optional[Callable[[], Any]]
    lifetime: Lifetime
    instance: Any = None
    built: bool = False


def key_of(interface: Key) -> str:
    """Interfaces register under their class name; plain strings pass through."""
    return interface.__name__ if isinstance(interface, type) else interface


class DIContainer:
    """
    Lazily built, shared services for one CLI invocation.

    Singletons are built on first resolve; their factories may resolve
    collaborators, so the lock is re-entrant.  Transient registrations build
    a new object on every resolve and are never disposed by the container.
    """

    def __init__(self) -> None:
        self._registrations: Dict[str, Registration] = {}
        self._build_order: List[str] = []
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # Registration API
    # ------------------------------------------------------------------

    def register(self, interface: Key, factory: Callable[[], Any], lifetime: Lifetime) -> None:
        key = key_of(interface)
        with self._lock:
            self._forget(key)
            self._registrations[key] = Registration(factory, lifetime)

    def register_singleton(self, interface: Key, factory: Callable[[], Any]) -> None:
        self.register(interface, factory, Lifetime.SINGLETON)

    def register_factory(self, interface: Key, factory: Callable[[], Any]) -> None:
        self.register(interface, factory, Lifetime.TRANSIENT)

    def register_instance(self, interface: Key, instance: Any) -> None:
        """Pre-built objects belong to the caller and are not closed on dispose."""
        key = key_of(interface)
        with self._lock:
            self._forget(key)
            self._registrations[key] = Registration(None, Lifetime.SINGLETON, instance, built=True)

    # ------------------------------------------------------------------
    # Resolution API
    # ------------------------------------------------------------------

    def resolve(self, interface: Key) -> Any:
        key = key_of(interface)
        with self._lock:
            registration = self._registrations.get(key)
            if registration is None:
                raise KeyError(f"[DIContainer] Dependency '{key}' is not registered.")
            if registration.built:
                return registration.instance

            instance = registration.factory()
            if registration.lifetime is Lifetime.SINGLETON:
                registration.instance = instance
                registration.built = True
                self._build_order.append(key)
            return instance

    def is_registered(self, interface: Key) -> bool:
        with self._lock:
            return key_of(interface) in self._registrations

    # ------------------------------------------------------------------
    # Teardown
    # ------------------------------------------------------------------

    def dispose(self) -> None:
        """Close built singletons in reverse build order, then drop every registration."""
        with self._lock:
            for key in reversed(self._build_order):
                close = getattr(self._registrations[key].instance, "close", None)
                if callable(close):
                    try:
                        close()
                    except Exception as exc:
                        logger.warning("[DIContainer] Closing '%s' failed: %s", key, exc)
            self.reset()

    def reset(self) -> None:
        with self._lock:
            self._registrations.clear()
            self._build_order.clear()

    def _forget(self, key: str) -> None:
        if key in self._build_order:
            self._build_order.remove(key)


# ---------------------------------------------------------------------------
# Module-level container used by main.py
# ---------------------------------------------------------------------------
container = DIContainer()
