"""
Base model for the configuration sections (kernel, training, run config).

Sections are frozen, reject unknown keys and do not coerce types, so a JSON
`5.0` for an integer field or `"false"` for a flag is an error.
"""
from __future__ import annotations

import pydantic
from pydantic import BaseModel, ConfigDict

from prcut.errors import ConfigError


def describe(exc: pydantic.ValidationError) -> str:
    parts = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "value"
        parts.append(f"{where}: {err['msg']}")
    return "; ".join(parts)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)

    def __init__(self, **data):
        try:
            super().__init__(**data)
        except pydantic.ValidationError as exc:
            raise ConfigError(f"{type(self).__name__}: {describe(exc)}") from exc

    def updated(self, **changes):
        """Copy with `changes` applied, validated like a fresh instance."""
        return type(self)(**{**dict(self), **changes})
