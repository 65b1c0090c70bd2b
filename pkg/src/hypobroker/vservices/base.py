"""Common plumbing for virtual service instances."""

from __future__ import annotations

import threading

from ..errors import UnknownMethod


class ServiceInstance:
    """Base for all plugin instances. Subclasses declare ``exports`` (the
    client-visible method names) and implement each as ``op_<name>``; the
    set is identical for every instance of a family, whatever its
    namespace semantics."""

    family = ""
    exports: tuple[str, ...] = ()

    def __init__(self, name: str, namespace: int):
        self.name = name
        self.namespace = namespace
        self._lock = threading.Lock()

    def dispatch(self, sender, method: str, payload: dict) -> dict:
        if method not in self.exports:
            raise UnknownMethod(f"{self.name}/{self.namespace} has no method {method!r}")
        op = getattr(self, f"op_{method}")
        with self._lock:
            return op(sender, payload)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}/{self.namespace}>"
