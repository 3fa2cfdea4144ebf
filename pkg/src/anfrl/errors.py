"""Exception types shared across the library."""


class ConfigError(Exception):
    """Invalid configuration: bad dimensions, infeasible sparsity targets, unparsable config files."""


class UsageError(Exception):
    """API misuse: stale caches, out-of-range indices, underfull buffers where forbidden."""


class TrainingDiverged(Exception):
    """Numerical blow-up (NaN/inf loss or weights) detected during a run."""
