"""Care-team coordination service.

A single-writer coordinator routes typed notifications between experts and
patients, runs unanimous-approval sessions, and persists everything as an
append-only event log that replays deterministically. Real-time delivery is
per-participant mailboxes with at-least-once semantics, exposed over HTTP
with a server-sent event stream.
"""

from caremesh.service import CoordinatorService
from caremesh.eventlog import EventLog

__version__ = "0.1.0"

__all__ = ["CoordinatorService", "EventLog", "__version__"]
