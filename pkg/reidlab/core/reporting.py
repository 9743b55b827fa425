"""Comparison tables, radar series and distribution histograms over finished runs

Pure formatting: every number here was already computed by the evaluation stages.
"""
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Sequence

from common.storage import ArtifactStore
from reidlab.core.evalharness import EvalReport, format_value
from reidlab.core.poisoner import DistributionShift

if TYPE_CHECKING:
    from reidlab.core.service import RunArtifacts

TABLE_COLUMNS = ("ba", "one_minus_r10", "ssim", "psnr")
PSNR_CEILING = 60.0


@dataclass(frozen=True)
class ComparisonRow:
    trigger: str
    ba: float
    one_minus_r10: float
    ssim: float
    psnr: float

    @classmethod
    def from_report(cls, report: EvalReport) -> "ComparisonRow":
        return cls(
            trigger=report.trigger,
            ba=report.ba,
            one_minus_r10=1.0 - report.rank_k[10],
            ssim=report.ssim_mean,
            psnr=report.psnr_mean,
        )

    def radar(self) -> Dict[str, float]:
        """Each axis in [0,1]; PSNR is capped at 60 dB and divided by 60"""
        psnr = PSNR_CEILING if math.isinf(self.psnr) else min(max(self.psnr, 0.0), PSNR_CEILING)
        return {
            "ba": self.ba,
            "one_minus_r10": self.one_minus_r10,
            "ssim": min(max(self.ssim, 0.0), 1.0),
            "psnr": psnr / PSNR_CEILING,
        }


def comparison_table(reports: Sequence[EvalReport]) -> List[ComparisonRow]:
    if not reports:
        raise ValueError("no evaluation reports to compare")
    return [ComparisonRow.from_report(r) for r in reports]


def comparison_text(rows: Sequence[ComparisonRow]) -> str:
    lines = ["trigger," + ",".join(TABLE_COLUMNS)]
    for row in rows:
        lines.append(row.trigger + "," + ",".join(format_value(float(getattr(row, c))) for c in TABLE_COLUMNS))
    return "\n".join(lines) + "\n"


def radar_text(rows: Sequence[ComparisonRow]) -> str:
    lines = ["trigger," + ",".join(TABLE_COLUMNS)]
    for row in rows:
        series = row.radar()
        lines.append(row.trigger + "," + ",".join(f"{series[c]:.6f}" for c in TABLE_COLUMNS))
    return "\n".join(lines) + "\n"


def distribution_text(shift: DistributionShift) -> str:
    """Per-identity label counts before and after poisoning; the footer holds the column totals"""
    rows = shift.rows()
    lines = ["identity,before,after"]
    lines += [f"{ident},{before},{after}" for ident, before, after in rows]
    lines.append(f"total,{sum(r[1] for r in rows)},{sum(r[2] for r in rows)}")
    lines.append(f"# l1={shift.l1:.6f}")
    return "\n".join(lines) + "\n"


def run_summary(artifacts: "RunArtifacts") -> str:
    sections = [
        f"experiment={artifacts.name}",
        f"config_hash={artifacts.config_hash}",
        f"n_poisoned={artifacts.n_poisoned}",
        "",
        "[backdoored model]",
        artifacts.backdoor_report.to_text(),
        "[clean model]",
        artifacts.clean_report.to_text(),
        "[distribution]",
        distribution_text(artifacts.distribution),
    ]
    if artifacts.detector_report is not None:
        sections += ["[frequency detector]", artifacts.detector_report.to_text()]
    if artifacts.prune_curve is not None:
        sections += ["[fine-pruning]", artifacts.prune_curve.to_text()]
    sections.append("[invariants]")
    sections += [f"FAILED {f}" for f in artifacts.invariant_failures] or ["all held"]
    return "\n".join(sections) + "\n"


def report(runs: Sequence["RunArtifacts | StoredRun"]) -> str:
    """Comparison table, radar series and distribution histograms over several runs

    Raises:
        ValueError: no runs given
    """
    if not runs:
        raise ValueError("missing artifacts: no runs to report")
    rows = comparison_table([run.backdoor_report for run in runs])
    parts = ["[comparison]", comparison_text(rows), "[radar]", radar_text(rows)]
    for run in runs:
        parts += [f"[distribution {run.name}]", distribution_text(run.distribution)]
    return "\n".join(parts)


def distribution_from_text(text: str) -> DistributionShift:
    before: Dict[int, int] = {}
    after: Dict[int, int] = {}
    l1 = float("nan")
    for line in text.splitlines():
        if line.startswith("# l1="):
            l1 = float(line[len("# l1="):])
            continue
        ident, b, a = line.split(",")
        if ident in ("identity", "total"):
            continue
        before[int(ident)], after[int(ident)] = int(b), int(a)
    return DistributionShift(before=before, after=after, l1=l1)


@dataclass(frozen=True)
class StoredRun:
    """A finished run read back from its artifact directory"""
    name: str
    backdoor_report: EvalReport
    distribution: DistributionShift


def load_run(store: ArtifactStore, prefix: str) -> StoredRun:
    """Read the evaluation and distribution artifacts under `<name>/<config_hash>`

    Raises:
        FileNotFoundError: the run has not been evaluated yet
        ConfigHashMismatchError: an artifact is stamped with another config hash
    """
    name, _, config_hash = prefix.strip("/").partition("/")
    if not config_hash:
        raise ValueError(f"run reference must look like <name>/<config_hash>, got '{prefix}'")
    report_json = store.get_text(f"{prefix}/eval_backdoor.json", config_hash)
    distribution = store.get_text(f"{prefix}/distribution.csv", config_hash)
    return StoredRun(name=name, backdoor_report=EvalReport.from_json(report_json),
                     distribution=distribution_from_text(distribution))
