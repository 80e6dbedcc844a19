SCENARIO_SUFFIX = ".toml"
SCENARIO_PACKAGE_DIR = "scenarios"
SEED_ENV = "MODLOCK_SEED"
SCENARIO_DIR_ENV = "MODLOCK_SCENARIO_DIR"
DEFAULT_SEED = 1

# simulated time is expressed in microseconds
US_PER_SECOND = 1_000_000.0

DEFAULT_MODE_BITS = 2
DEFAULT_COUNTER_BYTES = 8
DEFAULT_HOLDER_COUNTER_BYTES = 8
DEFAULT_HOLDER_ENTRY_BYTES = 16
DEFAULT_WAITER_ENTRY_BYTES = 24
DEFAULT_GRANT_BUFFER_BYTES = 256

DEFAULT_POLL_INTERVAL = 2.0
DEFAULT_BACKOFF_MULTIPLIER = 2.0
DEFAULT_BACKOFF_CAP = 64.0

DEFAULT_MISS_PENALTY = 2.0
DEFAULT_THETA = 0.99
DEFAULT_MAX_HOLDERS = 64
DEFAULT_MAX_WAITERS = 64

LINEARIZABILITY_MAX_OPS = 12

CSV_HEADER = ("scenario", "seed", "metric", "value")

# the event loop gives up after this many events per scheduled operation
EVENTS_PER_OP = 2_000
MIN_EVENT_BUDGET = 100_000
