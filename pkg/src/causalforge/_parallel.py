import os

ENV_VAR = "CAUSALFORGE_THREADS"


def max_workers() -> int:
    """Worker count: CPU count, capped by CAUSALFORGE_THREADS when set."""
    n = os.cpu_count() or 1
    cap = os.environ.get(ENV_VAR)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"{ENV_VAR} must be a positive integer, got {cap!r}") from None
    return n
