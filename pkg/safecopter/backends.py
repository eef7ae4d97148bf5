import csv
import json
import logging
from functools import lru_cache
from pathlib import Path

import jsonschema

from safecopter import settings
from safecopter.simulation import TRAJECTORY_UNITS, trajectory_columns

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def _schema(path):
    with open(path, encoding="utf-8") as fp:
        return json.load(fp)


def validate_report(report):
    """Check a report dictionary against the shipped JSON schema."""
    jsonschema.validate(instance=report, schema=_schema(str(settings.REPORT_SCHEMA)))


class FileBackend:
    def trajectory(self, records, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rotor_count = len(records[0].u) if records else 0
        with open(path, "w", newline="", encoding="utf-8") as fp:
            fp.write(f"# {TRAJECTORY_UNITS}\n")
            writer = csv.writer(fp)
            writer.writerow(trajectory_columns(rotor_count))
            for record in records:
                writer.writerow(record.as_row())
        logger.info("Output: wrote %d trajectory rows to %s", len(records), path)
        return path

    def report(self, report, path):
        data = report.to_dict() if hasattr(report, "to_dict") else report
        validate_report(data)
        return self._dump(data, path, "report")

    def compare(self, summary, path):
        for key in ("safe", "nominal"):
            validate_report(summary[key])
        return self._dump(summary, path, "comparison")

    def _dump(self, data, path, kind):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fp:
            json.dump(data, fp, indent=2, allow_nan=False)
            fp.write("\n")
        logger.info("Output: wrote %s to %s", kind, path)
        return path
