"""Deterministic seed derivation for parallel simulation runs."""

_MASK = (1 << 64) - 1


def mix64(base_seed: int, run: int) -> int:
    """Derive a per-run 64-bit seed from a base seed and a run index.

    Uses the splitmix64 finalizer (a bijective 64-bit mixer), so distinct
    (base_seed, run) pairs map to well-separated seeds and the mapping is
    reproducible across platforms.
    """
    z = (base_seed + run * 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)
