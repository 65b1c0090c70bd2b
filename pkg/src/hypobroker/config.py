"""Daemon configuration: the broker config file, the client manifest, and
a scaffolder that writes a ready-to-run demo tree. All referenced files
must parse cleanly before the daemon serves anything.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .macguard import SecurityLabel
from .transport import ClientIdentity

CONFIG_ENV_VAR = "HYPOBROKER_CONFIG"

_CONFIG_KEYS = (
    "listen",
    "admin",
    "nspolicy",
    "groups",
    "transfer_rules",
    "boot_manifest",
    "client_manifest",
    "seed",
    "admin_token",
    "console_dir",
    "provider",
    "provider_interval",
)


@dataclass
class DaemonConfig:
    listen: str = "unix:/tmp/hypobroker.sock"
    admin: str = "127.0.0.1:7800"
    nspolicy: Path = Path("nspolicy")
    groups: Path = Path("groups.conf")
    transfer_rules: Path = Path("transfer.rules")
    boot_manifest: Path = Path("services.boot")
    client_manifest: Path = Path("clients.manifest")
    seed: int = 7
    admin_token: str = ""
    console_dir: Path | None = None
    provider: str = "none"  # none | synthetic | replay:<path>
    provider_interval: float = 1.0
    base_dir: Path = field(default_factory=Path.cwd)

    def resolve(self, path: Path) -> Path:
        return path if path.is_absolute() else self.base_dir / path


def load_config(path: str | Path) -> DaemonConfig:
    """Parse a ``key = value`` config file; relative file paths resolve
    against the config file's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    config = DaemonConfig(base_dir=path.resolve().parent)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or key not in _CONFIG_KEYS:
            raise ConfigError(f"config line {lineno}: unknown or malformed entry {line!r}")
        try:
            _apply(config, key, value)
        except ValueError as exc:
            raise ConfigError(f"config line {lineno}: {exc}") from None
    return config


def _apply(config: DaemonConfig, key: str, value: str) -> None:
    if key == "seed":
        config.seed = int(value)
    elif key == "provider_interval":
        config.provider_interval = float(value)
    elif key in ("nspolicy", "groups", "transfer_rules", "boot_manifest", "client_manifest"):
        setattr(config, key, Path(value))
    elif key == "console_dir":
        config.console_dir = Path(value)
    else:
        setattr(config, key, value)


def config_from_env() -> DaemonConfig | None:
    named = os.environ.get(CONFIG_ENV_VAR)
    return load_config(named) if named else None


def parse_client_manifest(text: str) -> dict[str, ClientIdentity]:
    """Parse ``token uid label`` lines mapping connect tokens to trusted
    identities."""
    manifest: dict[str, ClientIdentity] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or not parts[1].isdigit():
            raise ConfigError(f"client manifest line {lineno}: expected 'token uid label'")
        token, uid, label = parts[0], int(parts[1]), parts[2]
        if token in manifest:
            raise ConfigError(f"client manifest line {lineno}: duplicate token {token!r}")
        try:
            manifest[token] = ClientIdentity(uid=uid, label=SecurityLabel.parse(label))
        except ConfigError as exc:
            raise ConfigError(f"client manifest line {lineno}: {exc}") from None
    return manifest


# -- demo scaffolding ---------------------------------------------------------

DEMO_BOOT_MANIFEST = """\
# name namespace plugin params...
location 0 location mode=global
location 1 location mode=random
location 2 location mode=fuzzy fuzz_radius_m=250
subinfo 0 subinfo device_id=490154203237518 line1_number=+13155550100 voicemail_number=+13155550199
subinfo 1 subinfo device_id=358240051111110 line1_number=+15555550100 voicemail_number=+15555550199
phone 0 phone
phone 1 phone
sensors 0 sensors mode=global
sensors 1 sensors mode=motion_randomized gyro=-10:10 magnetic=-100:100 orientation=0:360
sensors 2 sensors mode=light_randomized light=0:1000
ime 0 ime mode=global imes=builtin-kb:Builtin_Keyboard:builtin,swiftlike:SwiftLike:thirdparty
ime 1 ime mode=restricted imes=builtin-kb:Builtin_Keyboard:builtin,swiftlike:SwiftLike:thirdparty
"""

DEMO_CLIENT_MANIFEST = """\
# token uid label
tok-system 1000 system
tok-maps 10001 untrusted_app
tok-bank 10002 trusted_app
tok-game 10003 untrusted_app
"""

DEMO_GROUPS = """\
# group service namespace
Untrusted location 2
Untrusted subinfo 1
Untrusted phone 1
Sensitive ime 1
Paranoid location 1
Paranoid subinfo 1
Paranoid phone 1
Paranoid sensors 1
Paranoid ime 1
"""

DEMO_TRANSFER_RULES = """\
# open transfer fabric, minus system-owned handles between untrusted apps
neverallow untrusted_app untrusted_app system
allow * * trusted_app
allow * * untrusted_app
allow system * *
allow trusted_app * *
allow * system *
allow * trusted_app *
"""

DEMO_NSPOLICY = """\
# uid service namespace
"""


def write_demo_tree(directory: str | Path, listen: str | None = None, admin: str = "127.0.0.1:7800") -> Path:
    """Write a complete demo configuration into ``directory`` and return
    the path of the broker config file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "services.boot").write_text(DEMO_BOOT_MANIFEST, encoding="utf-8")
    (directory / "clients.manifest").write_text(DEMO_CLIENT_MANIFEST, encoding="utf-8")
    (directory / "groups.conf").write_text(DEMO_GROUPS, encoding="utf-8")
    (directory / "transfer.rules").write_text(DEMO_TRANSFER_RULES, encoding="utf-8")
    (directory / "nspolicy").write_text(DEMO_NSPOLICY, encoding="utf-8")
    listen = listen or f"unix:{directory / 'bus.sock'}"
    config_path = directory / "broker.conf"
    config_path.write_text(
        "listen = {listen}\n"
        "admin = {admin}\n"
        "nspolicy = nspolicy\n"
        "groups = groups.conf\n"
        "transfer_rules = transfer.rules\n"
        "boot_manifest = services.boot\n"
        "client_manifest = clients.manifest\n"
        "seed = 7\n"
        "provider = synthetic\n"
        "provider_interval = 1.0\n".format(listen=listen, admin=admin),
        encoding="utf-8",
    )
    return config_path
