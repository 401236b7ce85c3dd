"""Stage 5: side-by-side comparison of summary tables from several batches."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .deliverables import render_linegraph, summary_plot_spec
from .errors import CriteriaMismatch, TooFewBatches
from .stats import BatchSummaryTable


@dataclass
class ComparisonSet:
    entries: list[tuple[str, BatchSummaryTable]]

    def validate(self) -> "ComparisonSet":
        if len(self.entries) < 2:
            raise TooFewBatches(f"need at least 2 batches to compare, got {len(self.entries)}")
        ref_label, ref = self.entries[0]
        for label, table in self.entries[1:]:
            for i in range(max(len(ref.labels), len(table.labels))):
                a = ref.labels[i] if i < len(ref.labels) else "<none>"
                b = table.labels[i] if i < len(table.labels) else "<none>"
                if a != b:
                    raise CriteriaMismatch(
                        f"criteria differ at position {i}: {ref_label!r} has {a!r}, "
                        f"{label!r} has {b!r}"
                    )
        return self


def comparison_filename(column: str, reducer: str) -> str:
    return f"comparison-{column}-{reducer}.svg"


def compare_batches(
    cset: ComparisonSet | Sequence[tuple[str, BatchSummaryTable]],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> str:
    if not isinstance(cset, ComparisonSet):
        cset = ComparisonSet(list(cset))
    cset.validate()
    first = cset.entries[0][1]
    if not y_label and first.column:
        y_label = f"{first.column} ({first.reducer_name})"
    return render_linegraph(summary_plot_spec(cset.entries, title or "Batch comparison", x_label, y_label))
