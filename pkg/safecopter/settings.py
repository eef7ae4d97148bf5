import os
from pathlib import Path

PACKAGE_DIR = Path(__file__).parent


def _setting(name, default):
    """Read a SAFECOPTER_* override from the environment.

    The raw string is coerced to the type of ``default`` so callers always see the
    same type whether or not the variable is set.
    """
    raw = os.environ.get(name)
    if raw is None:
        return default
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, Path):
        return Path(raw)
    return raw


# output backend settings
OUTPUT_BACKEND = _setting(
    "SAFECOPTER_OUTPUT_BACKEND",
    "safecopter.backends.FileBackend",
)

# Should a crashing check suite abort `safecopter check` instead of being
# reported as a failed suite?
PROPAGATE_EXCEPTIONS = _setting("SAFECOPTER_PROPAGATE_EXCEPTIONS", False)

# QP filter. Active-set enumeration visits 2**rows candidate sets, so the row
# count is bounded.
QP_MAX_ROWS = _setting("SAFECOPTER_QP_MAX_ROWS", 16)
QP_SLACK_WEIGHT = _setting("SAFECOPTER_QP_SLACK_WEIGHT", 1e6)
QP_TOLERANCE = _setting("SAFECOPTER_QP_TOLERANCE", 1e-9)

# A barrier below -VIOLATION_TOLERANCE counts as a safety violation.
VIOLATION_TOLERANCE = _setting("SAFECOPTER_VIOLATION_TOLERANCE", 1e-6)

# Below this desired-force magnitude the nominal controller holds its last axis.
DEGENERATE_FORCE_EPS = _setting("SAFECOPTER_DEGENERATE_FORCE_EPS", 1e-6)

DEFAULT_SCENARIO = _setting(
    "SAFECOPTER_DEFAULT_SCENARIO",
    PACKAGE_DIR / "scenarios" / "circle_geofence.yaml",
)
REPORT_SCHEMA = _setting(
    "SAFECOPTER_REPORT_SCHEMA",
    PACKAGE_DIR / "schemas" / "report.schema.json",
)

LOG_LEVEL = _setting("SAFECOPTER_LOG_LEVEL", "INFO")
