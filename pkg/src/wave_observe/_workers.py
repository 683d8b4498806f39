"""Worker-count policy shared by the sample-parallel studies."""

from __future__ import annotations

import os

ENV_VAR = "WAVE_OBSERVE_THREADS"


def worker_count(default: int = 4) -> int:
    """Threads allowed for parallel sections, capped by ``WAVE_OBSERVE_THREADS``."""
    cap = os.environ.get(ENV_VAR)
    n = min(default, os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError as exc:
            raise ValueError(f"{ENV_VAR} must be an integer, got {cap!r}") from exc
    return max(n, 1)
