"""Service configuration, resolved from flags and environment variables.

Flags win over the environment; the environment wins over defaults.
Environment variables: MLMSCORER_MODEL, MLMSCORER_DEVICE,
MLMSCORER_MAX_SEQ, MLMSCORER_BATCH.
"""

from __future__ import annotations

import os
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScorerConfig:
    model_name: str
    device_hint: str = "cpu"
    max_sequence_length: int = 128
    batch_size: int = 16

    def __post_init__(self) -> None:
        if not self.model_name:
            raise ConfigError("model_name must be set (flag --model or MLMSCORER_MODEL)")
        if self.max_sequence_length < 8:
            raise ConfigError("max_sequence_length must be at least 8")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    @classmethod
    def resolve(
        cls,
        model: str | None = None,
        device: str | None = None,
        max_sequence_length: int | None = None,
        batch_size: int | None = None,
        env=os.environ,
    ) -> "ScorerConfig":
        def pick(flag, var, default, cast):
            if flag is not None:
                return flag
            raw = env.get(var)
            if raw is not None:
                try:
                    return cast(raw)
                except ValueError:
                    raise ConfigError(f"{var}={raw!r} is not a valid value") from None
            return default

        return cls(
            model_name=pick(model, "MLMSCORER_MODEL", "", str),
            device_hint=pick(device, "MLMSCORER_DEVICE", "cpu", str),
            max_sequence_length=pick(max_sequence_length, "MLMSCORER_MAX_SEQ", 128, int),
            batch_size=pick(batch_size, "MLMSCORER_BATCH", 16, int),
        )
