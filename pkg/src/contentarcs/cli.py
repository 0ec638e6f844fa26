"""``arc``: command-line client for creators, AI developers and node operators.

Exit codes: 0 success or permit, 1 operational error (node unreachable,
refused settlement), 2 deny, 3 unstated or not applicable, 4 invalid input.
"""

from __future__ import annotations

import os
import signal
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import click

from .compensation import (
    Accounts,
    CompensationError,
    PaymentEvent,
    attribute_by_similarity,
    distribute,
    generation_royalty,
    settle_event,
)
from .content_id import ALGORITHMS, ContentIdError, FingerprintIndex, phash, read_netpbm
from .identity import (
    IdentityError,
    KeyPair,
    canonical_bytes,
    generate_keypair,
    keypair_from_hex,
    parse_actor_id,
)
from .provenance import (
    TRAINING_CATEGORIES,
    TRAINING_VALUES,
    ProvenanceError,
    create_manifest,
    creation_info,
    soft_binding,
    training_mining,
    write_sidecar,
)
from .registry import (
    NodeServer,
    NodeState,
    NodeUnreachable,
    RegistryView,
    RemoteError,
    RemoteNode,
    issue_payload,
    materialize,
    payment_payload,
    registration_payload,
    revoke_payload,
    submit_payload,
)
from .rights import (
    ACTIONS,
    ALLOWED,
    DENY,
    NOT_ALLOWED,
    PERMIT,
    LicenseToken,
    PolicyError,
    Request,
    evaluate,
    issue_license,
    manifest_signals,
    parse_policy,
    reconcile,
    revoke_license,
)
from .storage import read_document, write_document

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DENY = 2
EXIT_UNSTATED = 3
EXIT_INVALID = 4

GENERATOR = "arc-cli/1"
DEFAULT_ENDPOINT = "127.0.0.1:7400"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


class Outcome(Exception):
    """Raised by commands whose exit code carries the answer (check)."""

    def __init__(self, code: int):
        self.code = code


# -- configuration --

@dataclass(frozen=True)
class CliConfig:
    data_dir: Path
    node_endpoint: str
    identity_file: Path
    default_algorithm: str = "phash64"

    @classmethod
    def load(cls, overrides: dict[str, Any], env: dict[str, str] | None = None) -> "CliConfig":
        """Flags beat ARC_* environment variables, which beat $ARC_HOME/config."""
        env = dict(os.environ if env is None else env)
        home = Path(env.get("ARC_HOME", Path.home() / ".arc"))
        values: dict[str, Any] = {
            "data_dir": home / "data",
            "node_endpoint": DEFAULT_ENDPOINT,
            "identity_file": home / "identity.key",
            "default_algorithm": "phash64",
        }
        config_file = home / "config"
        if config_file.exists():
            try:
                stored = read_document(config_file)
            except (ValueError, TypeError) as exc:
                raise CliError(f"unreadable config {config_file}: {exc}", EXIT_INVALID) from exc
            unknown = set(stored) - set(values) if isinstance(stored, dict) else {"<not a map>"}
            if unknown:
                raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_INVALID)
            values.update(stored)
        for name in values:
            if f"ARC_{name.upper()}" in env:
                values[name] = env[f"ARC_{name.upper()}"]
        values.update({k: v for k, v in overrides.items() if v is not None})
        if values["default_algorithm"] not in ALGORITHMS:
            raise CliError(f"unknown fingerprint algorithm {values['default_algorithm']!r}", EXIT_INVALID)
        return cls(
            data_dir=Path(values["data_dir"]),
            node_endpoint=str(values["node_endpoint"]),
            identity_file=Path(values["identity_file"]),
            default_algorithm=values["default_algorithm"],
        )


@dataclass
class Context:
    config: CliConfig
    json_output: bool

    def emit(self, document: Any, text: str | Callable[[], str]) -> None:
        if self.json_output:
            click.echo(canonical_bytes(document).decode("utf-8"))
        else:
            click.echo(text() if callable(text) else text)

    def identity(self) -> KeyPair:
        return load_identity(self.config.identity_file)

    def client(self) -> RemoteNode:
        return RemoteNode(self.config.node_endpoint)

    @property
    def accounts_file(self) -> Path:
        return self.config.data_dir / "accounts"

    def accounts(self) -> Accounts:
        if not self.accounts_file.exists():
            return Accounts()
        try:
            return Accounts.from_document(read_document(self.accounts_file))
        except (ValueError, TypeError) as exc:
            raise CliError(f"corrupt account store {self.accounts_file}: {exc}") from exc

    def save_accounts(self, accounts: Accounts) -> None:
        write_document(self.accounts_file, accounts.to_document())


def load_identity(path: Path) -> KeyPair:
    try:
        doc = read_document(path)
        return keypair_from_hex(doc["secret_key"])
    except FileNotFoundError as exc:
        raise CliError(f"no identity at {path}; run `arc keygen` first", EXIT_INVALID) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"unreadable identity file {path}", EXIT_INVALID) from exc


def fetch_view(client: RemoteNode) -> RegistryView:
    """Materialize a local copy of everything the node holds."""
    head = client.head()
    records = []
    for origin, info in sorted(head["chains"].items()):
        start = 0
        while start < info["length"]:
            page = client.fetch(origin, start, info["length"])
            if not page:
                raise CliError(f"node returned no records for {origin} at {start}")
            records.extend(page)
            start += len(page)
    return materialize(records)


def fingerprint_file(path: str, algorithm: str):
    try:
        return phash(read_netpbm(Path(path)), algorithm)
    except (ContentIdError, OSError) as exc:
        raise CliError(f"{path}: not a readable netpbm image ({exc})", EXIT_INVALID) from exc


def now(value: int | None) -> int:
    return int(time.time()) if value is None else value


def payment_hook(ctx: Context, signer: KeyPair, timestamp: int) -> Callable[[PaymentEvent], object]:
    def hook(event: PaymentEvent) -> object:
        return submit_payload(ctx.client(), "payment", payment_payload(event), signer, timestamp)
    return hook


# -- commands --

pass_ctx = click.make_pass_decorator(Context)
time_option = click.option("--time", "timestamp", type=int, default=None,
                           help="Timestamp in seconds (defaults to now).")


@click.group()
@click.option("--data-dir", type=click.Path(path_type=Path), default=None)
@click.option("--node", "node_endpoint", default=None, help="Node endpoint host:port.")
@click.option("--identity", "identity_file", type=click.Path(path_type=Path), default=None)
@click.option("--algorithm", "default_algorithm", default=None, help="phash64 or phash256.")
@click.option("--output", type=click.Choice(["text", "json"]), default="text")
@click.pass_context
def cli(click_ctx: click.Context, output: str, **overrides: Any) -> None:
    """Content ARCs: provenance, rights and compensation for creative assets."""
    click_ctx.obj = Context(CliConfig.load(overrides), output == "json")


@cli.command()
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Key file (default: configured identity).")
@click.option("--seed", default=None, help="64 hex chars; makes the key deterministic.")
@click.option("--force", is_flag=True, help="Overwrite an existing key file.")
@pass_ctx
def keygen(ctx: Context, out: Path | None, seed: str | None, force: bool) -> None:
    """Create a signing identity. Refuses to overwrite without --force."""
    path = out or ctx.config.identity_file
    if path.exists() and not force:
        raise CliError(f"{path} exists; pass --force to overwrite", EXIT_INVALID)
    try:
        key = generate_keypair(bytes.fromhex(seed) if seed is not None else None)
    except (ValueError, IdentityError) as exc:
        raise CliError(f"bad seed: {exc}", EXIT_INVALID) from exc
    path.parent.mkdir(parents=True, exist_ok=True)
    write_document(path, {"secret_key": key.secret_key.hex()}, mode=0o600)
    ctx.emit({"actor": key.actor, "path": str(path)}, key.actor)


def parse_opts(opts: tuple[str, ...]) -> dict[str, str] | None:
    if not opts:
        return None
    entries: dict[str, str] = {}
    for item in opts:
        category, sep, value = item.partition("=")
        if not sep or value not in TRAINING_VALUES:
            raise CliError(f"--opt expects CATEGORY=VALUE with VALUE in {TRAINING_VALUES}", EXIT_INVALID)
        targets = TRAINING_CATEGORIES if category == "all" else (category,)
        if category != "all" and category not in TRAINING_CATEGORIES:
            raise CliError(f"unknown category {category!r}", EXIT_INVALID)
        for c in targets:
            entries[c] = value
    missing = [c for c in TRAINING_CATEGORIES if c not in entries]
    if missing:
        # silence is never consent, so a partial declaration is refused
        raise CliError(f"--opt must cover every category; missing {missing}", EXIT_INVALID)
    return entries


@cli.command()
@click.argument("asset", type=click.Path(dir_okay=False))
@click.option("--opt", "opts", multiple=True, help="CATEGORY=allowed|not_allowed|constrained, or all=VALUE.")
@time_option
@pass_ctx
def register(ctx: Context, asset: str, opts: tuple[str, ...], timestamp: int | None) -> None:
    """Fingerprint ASSET, sign a manifest, register it and write the .arcm sidecar.

    Not idempotent: registering twice records two registrations.
    """
    fp = fingerprint_file(asset, ctx.config.default_algorithm)
    entries = parse_opts(opts)
    key = ctx.identity()
    ts = now(timestamp)
    assertions = [soft_binding(fp.hex()), creation_info(title=Path(asset).name)]
    if entries is not None:
        assertions.append(training_mining(entries))
    manifest = create_manifest(Path(asset).read_bytes(), assertions, key, GENERATOR, ts)
    receipt = submit_payload(ctx.client(), "manifest_registration", registration_payload(manifest), key, ts)
    sidecar = write_sidecar(asset, manifest)
    ctx.emit(
        {"manifest_id": manifest.manifest_id, "fingerprint": fp.hex(), "sidecar": str(sidecar), **receipt},
        f"{manifest.manifest_id} {fp.hex()}",
    )


@cli.group()
def license() -> None:
    """Issue and revoke signed license tokens."""


@license.command("issue")
@click.argument("policy_file", type=click.Path(dir_okay=False))
@click.option("--holder", required=True, help="Actor id of the licensee.")
@time_option
@pass_ctx
def license_issue(ctx: Context, policy_file: str, holder: str, timestamp: int | None) -> None:
    """Sign POLICY_FILE as a license for HOLDER and record it."""
    try:
        policy = parse_policy(Path(policy_file).read_bytes())
        holder = parse_actor_id(holder)
    except OSError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    key = ctx.identity()
    ts = now(timestamp)
    token = issue_license(policy, key, holder, ts)
    submit_payload(ctx.client(), "license_issue", issue_payload(token), key, ts)
    ctx.emit({"token_id": token.token_id, "holder": holder}, token.token_id)


@license.command("revoke")
@click.argument("token_id")
@time_option
@pass_ctx
def license_revoke(ctx: Context, token_id: str, timestamp: int | None) -> None:
    """Revoke TOKEN_ID. Only its issuer may do this; repeating it is harmless."""
    key = ctx.identity()
    ts = now(timestamp)
    submit_payload(ctx.client(), "license_revoke", revoke_payload(revoke_license(token_id, key, ts)), key, ts)
    ctx.emit({"token_id": token_id, "status": "revoked"}, f"{token_id} revoked")


@cli.command()
@click.argument("asset", type=click.Path(dir_okay=False))
@click.option("--max-distance", type=int, default=0, show_default=True)
@pass_ctx
def query(ctx: Context, asset: str, max_distance: int) -> None:
    """Look up registrations near ASSET's fingerprint."""
    fp = fingerprint_file(asset, ctx.config.default_algorithm)
    hits = ctx.client().lookup(fp, max_distance)

    def text() -> str:
        if not hits:
            return "no registrations"
        lines = []
        for h in hits:
            active = sum(1 for lic in h["licenses"] if lic["status"] == "active")
            tm = h["training_mining"]
            consent = ",".join(f"{c}={v}" for c, v in sorted(tm.items())) if tm else "unstated"
            lines.append(f"{h['manifest_id']} d={h['distance']} owner={h['owner']} "
                         f"licenses={active}/{len(h['licenses'])} training={consent}")
        return "\n".join(lines)

    ctx.emit({"fingerprint": fp.hex(), "hits": hits}, text)


def decide(hits: list[dict], actor: str, action: str, timestamp: int) -> tuple[int, str]:
    """License decisions first, then the creator's opt signal.

    A license held by the actor that has been revoked counts as a denial,
    so revoking never leaves the asset looking open.
    """
    revoked_held = False
    for hit in hits:
        for target in (hit["manifest_id"], hit["content_key"]):
            policies = []
            for lic in hit["licenses"]:
                token = LicenseToken.from_document(lic["token"])
                if token.holder != actor:
                    continue
                if lic["status"] == "active":
                    policies.append(token.policy)
                else:
                    revoked_held = True
            if not policies:
                continue
            decision = evaluate(policies, Request(actor, action, target, timestamp))
            if decision.outcome == PERMIT:
                return EXIT_OK, f"granted by license ({', '.join(decision.matched)})"
            if decision.outcome == DENY:
                return EXIT_DENY, f"refused by license ({', '.join(decision.matched)})"
    if revoked_held:
        return EXIT_DENY, "the actor's license was revoked"
    if action not in TRAINING_CATEGORIES:
        return EXIT_UNSTATED, f"no license covers {action}"
    signals = [s for hit in hits for s in manifest_signals(hit["training_mining"])]
    result = reconcile(signals, action)
    code = {ALLOWED: EXIT_OK, NOT_ALLOWED: EXIT_DENY}.get(result.decision, EXIT_UNSTATED)
    return code, f"{result.decision}: {'; '.join(result.explanation)}"


@cli.command()
@click.argument("asset", type=click.Path(dir_okay=False))
@click.option("--action", required=True)
@click.option("--actor", default=None, help="Actor id (default: own identity).")
@click.option("--max-distance", type=int, default=0, show_default=True)
@time_option
@pass_ctx
def check(ctx: Context, asset: str, action: str, actor: str | None, max_distance: int,
          timestamp: int | None) -> None:
    """May ACTOR perform ACTION on ASSET? Exit 0 permit, 2 deny, 3 unstated."""
    if action not in ACTIONS:
        raise CliError(f"unknown action {action!r}; expected one of {ACTIONS}", EXIT_INVALID)
    actor = parse_actor_id(actor) if actor is not None else ctx.identity().actor
    fp = fingerprint_file(asset, ctx.config.default_algorithm)
    hits = ctx.client().lookup(fp, max_distance)
    if not hits:
        code, reason = EXIT_UNSTATED, "no registration found for this asset"
    else:
        code, reason = decide(hits, actor, action, now(timestamp))
    outcome = {EXIT_OK: "permit", EXIT_DENY: "deny", EXIT_UNSTATED: "unstated"}[code]
    ctx.emit({"decision": outcome, "reason": reason, "actor": actor, "action": action}, f"{outcome}: {reason}")
    raise Outcome(code)


@cli.command()
@click.argument("token_id")
@click.option("--action", required=True)
@click.option("--target", default=None, help="Policy target (default: the policy's only target).")
@click.option("--uses", "prior_uses", type=int, default=0, help="Prior uses under this license.")
@time_option
@pass_ctx
def settle(ctx: Context, token_id: str, action: str, target: str | None, prior_uses: int,
           timestamp: int | None) -> None:
    """Pay the duties owed for one use of license TOKEN_ID by the holder."""
    key = ctx.identity()
    view = fetch_view(ctx.client())
    token = view.tokens.get(token_id)
    if token is None:
        raise CliError(f"unknown license {token_id}")
    if target is None:
        targets = sorted(token.policy.targets())
        if len(targets) != 1:
            raise CliError(f"policy has targets {targets}; pass --target", EXIT_INVALID)
        target = targets[0]
    ts = now(timestamp)
    accounts = ctx.accounts()
    request = Request(key.actor, action, target, ts, prior_uses)
    events = settle_event(view, token_id, request, accounts, payment_hook(ctx, key, ts))
    ctx.save_accounts(accounts)
    ctx.emit(
        {"events": [e.to_document() for e in events]},
        lambda: "\n".join(f"{e.payer} -> {e.payee} {e.amount}" for e in events) or "nothing owed",
    )


@cli.command()
@click.argument("synthetic", type=click.Path(dir_okay=False))
@click.option("--k", "k", type=int, default=5, show_default=True)
@click.option("--pool", type=int, required=True, help="Royalty pool in micro-units.")
@click.option("--dry-run", is_flag=True, help="Print the table without paying.")
@time_option
@pass_ctx
def attribute(ctx: Context, synthetic: str, k: int, pool: int, dry_run: bool, timestamp: int | None) -> None:
    """Split POOL among owners of the k registered assets nearest to SYNTHETIC."""
    if pool < 0 or k < 1:
        raise CliError("--pool must be >= 0 and --k >= 1", EXIT_INVALID)
    fp = fingerprint_file(synthetic, ctx.config.default_algorithm)
    view = fetch_view(ctx.client())
    index = view.indexes.get(fp.algorithm, FingerprintIndex(fp.algorithm))
    if len(index) == 0:
        raise CliError("the registry has no assets to attribute to")
    # several registrations may share a fingerprint; the first in fold order owns it
    owners = {key: entries[0].owner for key, entries in view.entries.items()}
    weights = attribute_by_similarity(fp, index, k, owners).weights
    if dry_run:
        payout = distribute(pool, attribute_by_similarity(fp, index, k, owners))
    else:
        key = ctx.identity()
        ts = now(timestamp)
        accounts = ctx.accounts()
        events = generation_royalty(fp, index, owners, pool, key.actor, accounts,
                                    payment_hook(ctx, key, ts), k=k)
        ctx.save_accounts(accounts)
        payout = {o: 0 for o in weights}
        for e in events:
            payout[e.payee] += e.amount
    rows = [{"owner": o, "weight": str(weights[o]), "payout": payout.get(o, 0)} for o in sorted(weights)]

    def text() -> str:
        lines = [f"{r['owner']} {r['weight']:>8} {r['payout']}" for r in rows]
        lines.append(f"total {sum(r['payout'] for r in rows)}")
        return "\n".join(lines)

    ctx.emit({"fingerprint": fp.hex(), "pool": pool, "rows": rows}, text)


@cli.group()
def account() -> None:
    """Stored-value balances kept in the data directory."""


@account.command("mint")
@click.argument("actor")
@click.argument("amount", type=int)
@pass_ctx
def account_mint(ctx: Context, actor: str, amount: int) -> None:
    """Credit AMOUNT micro-units to ACTOR (test funding)."""
    actor = parse_actor_id(actor)
    if amount < 0:
        raise CliError("amount must be non-negative", EXIT_INVALID)
    accounts = ctx.accounts()
    accounts.mint(actor, amount)
    ctx.save_accounts(accounts)
    ctx.emit({"actor": actor, "balance": accounts.balance(actor)}, f"{actor} {accounts.balance(actor)}")


@account.command("show")
@click.argument("actor", required=False)
@pass_ctx
def account_show(ctx: Context, actor: str | None) -> None:
    accounts = ctx.accounts()
    if actor is not None:
        actor = parse_actor_id(actor)
        shown = {actor: accounts.balance(actor)}
    else:
        shown = dict(sorted(accounts.balances.items()))
    ctx.emit({"balances": shown}, lambda: "\n".join(f"{a} {b}" for a, b in shown.items()) or "no accounts")


@cli.group()
def node() -> None:
    """Run a registry node or operate on one."""


@node.command("run")
@click.option("--listen", default=None, help="host:port (default: configured node endpoint).")
@pass_ctx
def node_run(ctx: Context, listen: str | None) -> None:
    """Serve the registry until interrupted."""
    state = NodeState.open(ctx.config.data_dir / "node")
    try:
        server = NodeServer(state, listen or ctx.config.node_endpoint)
    except OSError as exc:
        raise CliError(f"cannot listen on {listen or ctx.config.node_endpoint}: {exc}") from exc
    click.echo(f"node {state.node_id} serving on {server.endpoint}", err=True)
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(0))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


@node.command("sync")
@click.argument("peer")
@pass_ctx
def node_sync(ctx: Context, peer: str) -> None:
    """Ask the configured node to pull everything PEER has. Idempotent."""
    result = ctx.client().sync(peer)
    ctx.emit(result, f"added {result['added']} records")


@node.command("head")
@pass_ctx
def node_head(ctx: Context) -> None:
    head = ctx.client().head()
    ctx.emit(head, lambda: f"{head['node_id']} seq={head['seq']} chains={len(head['chains'])}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="arc", standalone_mode=False)
    except Outcome as out:
        return out.code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_ERROR
    except click.UsageError as exc:
        exc.show()
        return EXIT_INVALID
    except CliError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except (NodeUnreachable, CompensationError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ERROR
    except RemoteError as exc:
        click.echo(f"error: node refused: {exc}", err=True)
        return EXIT_INVALID if exc.code in ("invalid_record", "unauthorized", "bad_request") else EXIT_ERROR
    except (PolicyError, ProvenanceError, IdentityError, ContentIdError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
