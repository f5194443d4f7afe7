"""The custodian role and its persistent state."""

from sudp.custodian.core import Custodian, RedeemedGrant, SetupCredential, allow_all, state_digest
from sudp.custodian.events import EventLog
from sudp.custodian.freshness import FreshnessPool
from sudp.custodian.results import CommitReceipt, DeliveryArtifact, UseResult, open_delivery
from sudp.custodian.state import (
    COMMIT_STAGES, Entry, ProtectedState, SealedState, StateStore, load_state,
)

__all__ = [
    "COMMIT_STAGES", "CommitReceipt", "Custodian", "DeliveryArtifact", "Entry", "EventLog",
    "FreshnessPool", "ProtectedState", "RedeemedGrant", "SealedState", "SetupCredential",
    "StateStore", "UseResult", "allow_all", "load_state", "open_delivery", "state_digest",
]
