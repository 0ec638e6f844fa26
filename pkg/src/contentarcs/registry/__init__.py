"""Federated, hash-chained registry of manifests, licenses and payments."""

from .ledger import GENESIS, PAYLOAD_TYPES, ChainReport, LedgerError, LedgerRecord, make_record, verify_chain
from .node import (
    AuthorizationError,
    InvalidRecord,
    NodeState,
    RegistryError,
    StaleHead,
    SyncError,
    SyncResult,
    append,
    sync,
)
from .view import (
    Entry,
    Hit,
    RegistryView,
    issue_payload,
    lookup,
    materialize,
    payment_payload,
    registration_payload,
    revoke_payload,
)
from .wire import (
    NodeServer,
    NodeUnreachable,
    RemoteError,
    RemoteNode,
    fetch_records,
    query_head,
    query_lookup,
    serve,
    submit_payload,
)

__all__ = [
    "GENESIS",
    "PAYLOAD_TYPES",
    "AuthorizationError",
    "ChainReport",
    "Entry",
    "Hit",
    "InvalidRecord",
    "LedgerError",
    "LedgerRecord",
    "NodeServer",
    "NodeState",
    "NodeUnreachable",
    "RegistryError",
    "RegistryView",
    "RemoteError",
    "RemoteNode",
    "StaleHead",
    "SyncError",
    "SyncResult",
    "append",
    "fetch_records",
    "issue_payload",
    "payment_payload",
    "registration_payload",
    "revoke_payload",
    "lookup",
    "make_record",
    "materialize",
    "query_head",
    "query_lookup",
    "serve",
    "submit_payload",
    "sync",
    "verify_chain",
]
