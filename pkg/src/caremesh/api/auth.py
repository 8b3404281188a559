"""Static bearer-token table.

The table is a canonical-form file mapping token -> participant id, loaded
once at boot; there is no issuance endpoint. A token may be provisioned
before its participant registers (ids are deterministic, so operators can
pre-bind p1, p2, ...): such a token authenticates setup commands but cannot
act as the participant until registration lands.
"""

from __future__ import annotations

from pathlib import Path

from caremesh import canonical
from caremesh.errors import InvalidArgument


class TokenTable:
    def __init__(self, entries: dict[str, str]):
        seen: dict[str, str] = {}
        for token, participant in entries.items():
            if not isinstance(token, str) or not token:
                raise InvalidArgument("tokens must be non-empty strings")
            if not isinstance(participant, str) or not participant:
                raise InvalidArgument(f"token {token!r} maps to an invalid id")
            if participant in seen:
                raise InvalidArgument(
                    f"participant {participant} has more than one token"
                )
            seen[participant] = token
        self._by_token = dict(entries)

    @classmethod
    def load(cls, path: str | Path) -> "TokenTable":
        try:
            raw = canonical.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InvalidArgument(f"cannot read token table {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise InvalidArgument("token table must be an object")
        return cls(raw)

    def participant_for(self, token: str) -> str | None:
        return self._by_token.get(token)

    def __len__(self) -> int:
        return len(self._by_token)
