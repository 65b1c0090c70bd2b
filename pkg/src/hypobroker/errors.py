"""Broker error types. Every error maps to a wire status code so socket
clients can re-raise the same exception the in-process API would."""

from __future__ import annotations


class BrokerError(Exception):
    status = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.status)


class AuthRejected(BrokerError):
    status = "auth_rejected"


class BadHandle(BrokerError):
    status = "bad_handle"


class ServiceUnavailable(BrokerError):
    status = "service_unavailable"


class NoSuchRecipient(BrokerError):
    status = "no_such_recipient"


class PermissionDenied(BrokerError):
    status = "permission_denied"


class AlreadyRegistered(BrokerError):
    status = "already_registered"


class GlobalMissing(BrokerError):
    status = "global_missing"


class NoSuchService(BrokerError):
    status = "no_such_service"


class UnknownMethod(BrokerError):
    status = "unknown_method"


class NoFixAvailable(BrokerError):
    status = "no_fix_available"


class NoSuchField(BrokerError):
    status = "no_such_field"


class StaleFocus(BrokerError):
    status = "stale_focus"


class NoSuchGroup(BrokerError):
    status = "no_such_group"


class BadRequest(BrokerError):
    status = "bad_request"


class ConfigError(BrokerError):
    """Startup-time configuration failure; the daemon refuses to serve."""

    status = "config_error"


class PolicyParseError(ConfigError):
    status = "policy_parse_error"

    def __init__(self, line: int, message: str = ""):
        self.line = line
        super().__init__(f"line {line}: {message or 'malformed policy line'}")


class DuplicateRuleError(ConfigError):
    status = "duplicate_rule"

    def __init__(self, line: int, message: str = ""):
        self.line = line
        super().__init__(f"line {line}: {message or 'duplicate (uid, service) rule'}")


class BenchAborted(BrokerError):
    status = "bench_aborted"


class FootprintUnavailable(BrokerError):
    status = "footprint_unavailable"


def error_for_status(status: str, message: str = "") -> BrokerError:
    cls = _STATUS_MAP.get(status, BrokerError)
    return cls(message)


def _collect() -> dict[str, type[BrokerError]]:
    out: dict[str, type[BrokerError]] = {}
    stack: list[type[BrokerError]] = [BrokerError]
    while stack:
        cls = stack.pop()
        out.setdefault(cls.status, cls)
        stack.extend(cls.__subclasses__())
    return out


_STATUS_MAP = _collect()
