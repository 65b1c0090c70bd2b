"""Daemon assembly: load and validate every configured file, boot all
service instances, then serve the bus and the admin API. Any config defect
prevents the broker from serving a single request.
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path

from .adminapi import AdminServer
from .boot import PluginLibrary, boot_registry, parse_boot_manifest
from .config import DaemonConfig, parse_client_manifest
from .errors import ConfigError
from .hypovisor import Registry
from .macguard import parse_ruleset, validate_ruleset
from .policy import PolicyStore, parse_groups, parse_policy, validate
from .transport import Broker
from .vservices.provider import ProviderHub, SyntheticProvider, read_replay
from .wire import BusServer

log = logging.getLogger("hypobroker.daemon")


class Daemon:
    def __init__(self, config: DaemonConfig):
        self.config = config
        self.hub = ProviderHub()
        self.registry = Registry()

        ruleset = parse_ruleset(self._read(config.transfer_rules))
        conflicts = validate_ruleset(ruleset)
        if conflicts:
            lines = "; ".join(
                f"allow({a.sender},{a.receiver},{a.owner}) vs "
                f"neverallow({n.sender},{n.receiver},{n.owner})"
                for a, n in conflicts
            )
            raise ConfigError(f"transfer ruleset is inconsistent: {lines}")

        groups = parse_groups(self._read(config.groups))
        policy_path = config.resolve(config.nspolicy)
        initial_policy = parse_policy(self._read(config.nspolicy))
        self.policy_store = PolicyStore(initial=initial_policy, path=policy_path, groups=groups)

        manifest = parse_client_manifest(self._read(config.client_manifest))
        entries = parse_boot_manifest(self._read(config.boot_manifest))
        self.library = PluginLibrary(self.hub, seed=config.seed)
        boot_registry(entries, self.registry, self.library)

        for diagnostic in validate(initial_policy, self.registry.snapshot(), groups.values()):
            log.warning("policy: %s", diagnostic)

        self.broker = Broker(
            registry=self.registry,
            policy_store=self.policy_store,
            ruleset=ruleset,
            client_manifest=manifest,
            endpoint_factory=self.library.build,
        )

        host, _, port = config.admin.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"bad admin address {config.admin!r}")
        self.bus = BusServer(self.broker, config.listen)
        self.admin = AdminServer(
            self.broker,
            self.hub,
            host=host,
            port=int(port),
            token=config.admin_token,
            console_dir=config.resolve(config.console_dir) if config.console_dir else None,
        )
        self.provider: SyntheticProvider | None = None
        self._stop = threading.Event()

    def _read(self, path: Path) -> str:
        resolved = self.config.resolve(path)
        try:
            return resolved.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {resolved}: {exc}") from None

    def start(self) -> None:
        self.bus.start()
        self.admin.start()
        provider = self.config.provider
        if provider == "synthetic":
            self.provider = SyntheticProvider(
                self.hub, interval_s=self.config.provider_interval, seed=self.config.seed
            )
            self.provider.start()
        elif provider.startswith("replay:"):
            path = self.config.resolve(Path(provider[len("replay:"):]))
            with path.open(encoding="utf-8") as f:
                for event in read_replay(f):
                    self.hub.apply_event(event)
        elif provider != "none":
            raise ConfigError(f"unknown provider mode {provider!r}")
        log.info(
            "serving %d service instances on %s (admin http://%s)",
            len(self.registry),
            self.bus.address,
            self.admin.address,
        )

    def stop(self) -> None:
        self._stop.set()
        if self.provider is not None:
            self.provider.stop()
        self.admin.stop()
        self.bus.stop()

    def wait(self) -> None:
        try:
            while not self._stop.wait(timeout=1.0):
                pass
        except KeyboardInterrupt:
            log.info("interrupted; shutting down")
            self.stop()
