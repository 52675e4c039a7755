"""
Leakage reports: duplicate sample counts per (train source, benchmark).
"""

import csv
from dataclasses import dataclass, field
from io import StringIO

from Keye_Curation.exceptions import InvalidInputError
from toolkit.jsonl import render_json

CSV_HEADER = ('train_source', 'benchmark', 'duplicates')
TOTAL_SOURCE = 'TOTAL'
REPORT_FORMATS = ('json', 'csv')


@dataclass
class LeakageReport:
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, count in self.counts.items():
            if count < 0:
                raise InvalidInputError(f"Negative duplicate count for {key}.")

    def add(self, train_source, benchmark, count=1):
        if count < 0:
            raise InvalidInputError("Duplicate counts cannot be negative.")
        key = (train_source, benchmark)
        self.counts[key] = self.counts.get(key, 0) + count

    @property
    def rows(self):
        """(train_source, benchmark, duplicate_sample_count) sorted by source then benchmark."""
        return [(source, bench, count) for (source, bench), count in sorted(self.counts.items())]

    @property
    def totals(self):
        totals = {}
        for (_, bench), count in sorted(self.counts.items()):
            totals[bench] = totals.get(bench, 0) + count
        return totals

    def merge(self, other):
        """Combine two shard reports; associative and commutative."""
        merged = LeakageReport(dict(self.counts))
        for (source, bench), count in other.counts.items():
            merged.add(source, bench, count)
        return merged


def report_as_dict(report):
    return {
        'rows': [
            {'train_source': source, 'benchmark': bench, 'duplicates': count}
            for source, bench, count in report.rows
        ],
        'totals': dict(sorted(report.totals.items())),
    }


def emit_report(report, format='csv'):
    """
    Serialize a report deterministically.

    CSV rows are followed by a TOTAL row for every benchmark that more than
    one train source contributed to.
    """
    if format == 'json':
        return render_json(report_as_dict(report)) + b'\n'
    if format != 'csv':
        raise InvalidInputError(f"Unknown report format {format!r}; expected one of {REPORT_FORMATS}.")

    output = StringIO()
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow(CSV_HEADER)
    rows = report.rows
    writer.writerows(rows)

    sources_per_bench = {}
    for _, bench, _ in rows:
        sources_per_bench[bench] = sources_per_bench.get(bench, 0) + 1
    for bench, total in sorted(report.totals.items()):
        if sources_per_bench[bench] > 1:
            writer.writerow((TOTAL_SOURCE, bench, total))
    return output.getvalue().encode('utf-8')
