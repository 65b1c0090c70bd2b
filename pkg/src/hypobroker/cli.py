"""Command-line surface: run the broker daemon, edit and inspect policy
through the admin API, run demo clients against the live bus, feed
provider replays, and run the benchmarks.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import urllib.error
import urllib.request
from pathlib import Path

from .bench import BenchConfig, BenchReport, run_footprint_bench, run_lookup_bench, run_transform_bench
from .boot import parse_boot_manifest
from .config import CONFIG_ENV_VAR, DaemonConfig, config_from_env, load_config, write_demo_tree
from .daemon import Daemon
from .errors import BrokerError, ConfigError
from .policy import parse_groups, parse_policy, validate
from .wire import BusClient

log = logging.getLogger("hypobroker.cli")


def _load_daemon_config(args) -> DaemonConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    from_env = config_from_env()
    if from_env is not None:
        return from_env
    raise ConfigError(f"no config file; pass --config or set {CONFIG_ENV_VAR}")


def _admin_url(args) -> str:
    admin = getattr(args, "admin", None)
    if not admin:
        admin = _load_daemon_config(args).admin
    return f"http://{admin}"


def _api(args, method: str, path: str, body: dict | None = None) -> dict:
    url = _admin_url(args) + path
    data = json.dumps(body).encode("utf-8") if body is not None else None
    request = urllib.request.Request(url, data=data, method=method)
    request.add_header("Content-Type", "application/json")
    token = getattr(args, "admin_token", "")
    if token:
        request.add_header("Authorization", f"Bearer {token}")
    try:
        with urllib.request.urlopen(request, timeout=10.0) as response:
            return json.loads(response.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", "replace")
        raise ConfigError(f"admin api {method} {path} failed: {exc.code} {detail}") from None
    except urllib.error.URLError as exc:
        raise ConfigError(f"admin api unreachable at {url}: {exc.reason}") from None


# -- subcommands ----------------------------------------------------------------


def cmd_init(args) -> int:
    config_path = write_demo_tree(args.directory, listen=args.listen, admin=args.admin or "127.0.0.1:7800")
    print(f"wrote demo configuration to {config_path}")
    print(f"run: hypobroker broker run --config {config_path}")
    return 0


def cmd_broker_run(args) -> int:
    config = _load_daemon_config(args)
    if args.listen:
        config.listen = args.listen
    if args.admin:
        config.admin = args.admin
    if args.admin_token:
        config.admin_token = args.admin_token
    if args.provider:
        config.provider = args.provider
    if args.console_dir:
        config.console_dir = Path(args.console_dir)
    daemon = Daemon(config)
    daemon.start()
    print(f"bus on {daemon.bus.address}, admin on http://{daemon.admin.address}", flush=True)
    daemon.wait()
    return 0


def cmd_policy_show(args) -> int:
    reply = _api(args, "GET", "/v1/policy")
    print(f"# version {reply['version']}")
    for rule in reply["rules"]:
        print(f"{rule['uid']} {rule['service']} {rule['namespace']}")
    return 0


def cmd_policy_set(args) -> int:
    reply = _api(
        args, "PUT", "/v1/policy/rules",
        {"uid": args.uid, "service": args.service, "namespace": args.namespace},
    )
    print(f"ok (version {reply['version']})")
    return 0


def cmd_policy_rm(args) -> int:
    reply = _api(args, "DELETE", f"/v1/policy/rules/{args.uid}/{args.service}")
    print(f"ok (version {reply['version']})")
    return 0


def cmd_policy_assign(args) -> int:
    reply = _api(args, "POST", "/v1/policy/assign", {"uid": args.uid, "group": args.group})
    print(f"ok (version {reply['version']})")
    return 0


def cmd_policy_validate(args) -> int:
    config = _load_daemon_config(args)
    policy = parse_policy(config.resolve(config.nspolicy).read_text(encoding="utf-8"))
    groups = parse_groups(config.resolve(config.groups).read_text(encoding="utf-8"))
    entries = parse_boot_manifest(config.resolve(config.boot_manifest).read_text(encoding="utf-8"))
    registered = [(e.name, e.namespace) for e in entries]
    diagnostics = validate(policy, registered, groups.values())
    for diagnostic in diagnostics:
        print(f"warning: {diagnostic}")
    if not diagnostics:
        print("policy is clean")
        return 0
    return 1


def _connect_for_uid(args) -> BusClient:
    config = _load_daemon_config(args)
    manifest_text = config.resolve(config.client_manifest).read_text(encoding="utf-8")
    token = None
    for line in manifest_text.splitlines():
        parts = line.split()
        if len(parts) == 3 and parts[1].isdigit() and int(parts[1]) == args.uid:
            token = parts[0]
            break
    if token is None:
        raise ConfigError(f"no client manifest token for uid {args.uid}")
    return BusClient(config.listen, token)


def cmd_demo(args) -> int:
    client = _connect_for_uid(args)
    calls = {
        "location": [("location", "get_last_location", {}), ("location", "get_stats", {})],
        "subinfo": [
            ("subinfo", "get_subscriber_field", {"field": "device_id"}),
            ("subinfo", "get_subscriber_field", {"field": "line1_number"}),
            ("phone", "get_device_id", {}),
        ],
        "sensors": [("sensors", "get_last_frame", {}), ("sensors", "get_stats", {})],
        "ime": [("ime", "list_input_methods", {})],
    }[args.family]
    with client:
        for service, method, payload in calls:
            handle = client.get_service(service)
            try:
                reply = client.transact(handle, method, payload)
            except BrokerError as exc:
                print(f"{service}.{method}: {exc.status} ({exc})")
                continue
            print(f"{service}.{method} raw: {json.dumps(reply, sort_keys=True)}")
            print(f"{service}.{method}: {_summarize(method, reply)}")
    return 0


def _summarize(method: str, reply: dict) -> str:
    if method == "get_last_location":
        return (
            f"lat {reply['latitude']:.5f}, lon {reply['longitude']:.5f}, "
            f"accuracy {reply['accuracy']:.0f} m"
        )
    if method == "get_subscriber_field":
        return f"{reply['field']} = {reply['value']}"
    if method == "get_device_id":
        return f"device_id = {reply['device_id']}"
    if method == "get_last_frame":
        light = reply["channels"]["light"][0]
        gyro = ", ".join(f"{v:.3f}" for v in reply["channels"]["gyro"])
        return f"light {light:.1f} lux, gyro [{gyro}]"
    if method == "list_input_methods":
        names = ", ".join(ime["display_name"] for ime in reply["imes"])
        return f"{len(reply['imes'])} input methods: {names}"
    if method == "get_stats":
        return f"{reply['updates']} provider updates"
    return json.dumps(reply, sort_keys=True)


def cmd_provider_replay(args) -> int:
    events = []
    with open(args.file, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    reply = _api(args, "POST", "/v1/provider/events", {"events": events})
    print(f"applied {reply['applied']} provider events")
    return 0


def cmd_bench_lookup(args) -> int:
    config = BenchConfig(
        namespace_counts=[int(n) for n in args.namespaces.split(",")],
        rules_per_namespace=args.rules_per_ns,
        iterations=args.iters,
        warmup=args.warmup,
        seed=args.seed,
    )
    report = run_lookup_bench(config)
    if args.transform_fixes:
        report.transform = run_transform_bench(
            config.namespace_counts, fixes=args.transform_fixes, seed=args.seed
        )
    _finish_bench(report, args.out)
    for result in report.lookup:
        print(
            f"{result.namespaces}NS ({result.rules} rules): "
            f"mean {result.mean_lookup_ns:.0f} ns, median {result.median_lookup_ns:.0f} ns, "
            f"p99 {result.p99_lookup_ns:.0f} ns"
        )
    if report.overhead_pct_per_namespace is not None:
        print(f"overhead per namespace: {report.overhead_pct_per_namespace:+.2f}% of 0NS mean")
    if report.transform:
        print(f"transform variation across configs: {report.transform['variation_pct']:.2f}%")
    return 0


def cmd_bench_footprint(args) -> int:
    counts = [int(n) for n in args.instances.split(",")]
    report = run_footprint_bench(counts, seed=args.seed)
    _finish_bench(report, args.out)
    for row in report.footprint:
        print(f"{row['instances']} instances: {row['footprint_bytes']} bytes")
    if report.footprint_pct_per_service is not None:
        print(f"footprint growth per service: {report.footprint_pct_per_service:+.4f}%")
    return 0


def _finish_bench(report: BenchReport, out: str | None) -> None:
    if out:
        report.write(out)
        print(f"report written to {out}")


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypobroker", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    init_p = sub.add_parser("init", help="write a runnable demo configuration")
    init_p.add_argument("directory")
    init_p.add_argument("--listen", default=None)
    init_p.add_argument("--admin", default=None)
    init_p.set_defaults(func=cmd_init)

    broker_p = sub.add_parser("broker", help="broker daemon")
    broker_sub = broker_p.add_subparsers(dest="action", required=True)
    run_p = broker_sub.add_parser("run", help="serve the bus and admin api")
    run_p.add_argument("-c", "--config")
    run_p.add_argument("--listen", help="bus endpoint (unix:/path or tcp:host:port)")
    run_p.add_argument("--admin", help="admin api host:port")
    run_p.add_argument("--admin-token", default="", help="require this bearer token on the admin api")
    run_p.add_argument("--provider", help="none | synthetic | replay:<file>")
    run_p.add_argument("--console-dir", help="serve the policy console from this directory")
    run_p.set_defaults(func=cmd_broker_run)

    policy_p = sub.add_parser("policy", help="inspect and edit the live policy")
    policy_sub = policy_p.add_subparsers(dest="action", required=True)
    for name in ("show", "set", "rm", "assign", "validate"):
        p = policy_sub.add_parser(name)
        p.add_argument("-c", "--config")
        p.add_argument("--admin", help="admin api host:port (default: from config)")
        p.add_argument("--admin-token", default="")
        if name == "set":
            p.add_argument("uid", type=int)
            p.add_argument("service")
            p.add_argument("namespace", type=int)
            p.set_defaults(func=cmd_policy_set)
        elif name == "rm":
            p.add_argument("uid", type=int)
            p.add_argument("service")
            p.set_defaults(func=cmd_policy_rm)
        elif name == "assign":
            p.add_argument("uid", type=int)
            p.add_argument("group")
            p.set_defaults(func=cmd_policy_assign)
        elif name == "validate":
            p.set_defaults(func=cmd_policy_validate)
        else:
            p.set_defaults(func=cmd_policy_show)

    demo_p = sub.add_parser("demo", help="run a demo client against the live bus")
    demo_p.add_argument("family", choices=("location", "subinfo", "sensors", "ime"))
    demo_p.add_argument("--uid", type=int, required=True)
    demo_p.add_argument("-c", "--config")
    demo_p.set_defaults(func=cmd_demo)

    provider_p = sub.add_parser("provider", help="drive providers on a running broker")
    provider_sub = provider_p.add_subparsers(dest="action", required=True)
    replay_p = provider_sub.add_parser("replay", help="post a replay file to the broker")
    replay_p.add_argument("file")
    replay_p.add_argument("-c", "--config")
    replay_p.add_argument("--admin")
    replay_p.add_argument("--admin-token", default="")
    replay_p.set_defaults(func=cmd_provider_replay)

    bench_p = sub.add_parser("bench", help="benchmarks")
    bench_sub = bench_p.add_subparsers(dest="action", required=True)
    lookup_p = bench_sub.add_parser("lookup", help="lookup latency vs namespace count")
    lookup_p.add_argument("--namespaces", default="0,1,2,3")
    lookup_p.add_argument("--rules-per-ns", type=int, default=100)
    lookup_p.add_argument("--iters", type=int, default=5000)
    lookup_p.add_argument("--warmup", type=int, default=500)
    lookup_p.add_argument("--seed", type=int, default=7)
    lookup_p.add_argument("--transform-fixes", type=int, default=0,
                          help="also run the pure transform microbenchmark with this many fixes")
    lookup_p.add_argument("--out", help="write JSON report (raw samples as CSV alongside)")
    lookup_p.set_defaults(func=cmd_bench_lookup)
    footprint_p = bench_sub.add_parser("footprint", help="memory footprint vs instance count")
    footprint_p.add_argument("--instances", default="0,3,6")
    footprint_p.add_argument("--seed", type=int, default=7)
    footprint_p.add_argument("--out")
    footprint_p.set_defaults(func=cmd_bench_footprint)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return int(args.func(args))
    except BrokerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
