"""Input-method manager family. The restricted namespace lists only
built-in input methods; every instance tracks the current window focus
pushed by the window-manager analog and rejects commits that do not match
it.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import BadRequest, StaleFocus
from .base import ServiceInstance

IME_MODES = ("global", "restricted")

DEFAULT_IMES = (
    ("builtin-kb", "Builtin_Keyboard", True),
    ("swiftlike", "SwiftLike", False),
)


@dataclass(frozen=True)
class ImeDescriptor:
    ime_id: str
    display_name: str
    builtin: bool

    def to_payload(self) -> dict:
        return {"ime_id": self.ime_id, "display_name": self.display_name, "builtin": self.builtin}


class ImeInstance(ServiceInstance):
    family = "ime"
    exports = ("list_input_methods", "commit_text")

    def __init__(
        self,
        name: str,
        namespace: int,
        mode: str = "global",
        installed: tuple[ImeDescriptor, ...] = (),
    ):
        super().__init__(name, namespace)
        if mode not in IME_MODES:
            raise ValueError(f"unknown ime mode {mode!r}")
        ids = [ime.ime_id for ime in installed]
        if len(ids) != len(set(ids)):
            raise ValueError("ime_id values must be unique")
        self.mode = mode
        self.installed = tuple(installed)
        self._focus: str | None = None

    def push_focus(self, activity_id: str) -> None:
        """Window-manager callback: record the activity currently focused.
        Commits are accepted only against this activity."""
        with self._lock:
            self._focus = activity_id

    @property
    def current_focus(self) -> str | None:
        return self._focus

    def visible_imes(self) -> tuple[ImeDescriptor, ...]:
        if self.mode == "restricted":
            return tuple(ime for ime in self.installed if ime.builtin)
        return self.installed

    def op_list_input_methods(self, sender, payload: dict) -> dict:
        return {"imes": [ime.to_payload() for ime in self.visible_imes()]}

    def op_commit_text(self, sender, payload: dict) -> dict:
        activity_id = payload.get("activity_id")
        text = payload.get("text", "")
        if not isinstance(activity_id, str):
            raise BadRequest("commit_text payload needs a string 'activity_id'")
        if self._focus is None or activity_id != self._focus:
            raise StaleFocus(
                f"commit for {activity_id!r} rejected; current focus is {self._focus!r}"
            )
        return {"accepted": True, "length": len(text)}
