import math

import pytest

from common.storage import ArtifactStore
from reidlab.core.evalharness import EvalReport
from reidlab.core.poisoner import DistributionShift
from reidlab.core.reporting import (
    ComparisonRow,
    StoredRun,
    comparison_table,
    comparison_text,
    distribution_from_text,
    distribution_text,
    load_run,
    radar_text,
    report,
)

pytestmark = pytest.mark.unit


def _report(trigger, ba=0.8, r10=0.3, ssim=0.97, psnr=41.5):
    return EvalReport(
        run_name=f"{trigger}/backdoor", trigger=trigger, ba=ba, asr_targeted=None, asr_nontargeted=0.6,
        positive_retrieval_rate=0.4, rank_k={1: 0.1, 5: 0.2, 10: r10}, map=0.2,
        clean_rank_k={1: 0.7, 5: 0.8, 10: 0.9}, clean_map=0.6, ssim_mean=ssim, psnr_mean=psnr,
    )


SHIFT = DistributionShift(before={0: 4, 1: 4, 2: 4}, after={0: 4, 1: 6, 2: 4}, l1=0.142857)


def test_comparison_table_has_one_row_per_trigger():
    reports = [_report(t) for t in ("dynamic", "badnets_patch", "blended", "sig_ramp")]
    rows = comparison_table(reports)
    assert [r.trigger for r in rows] == ["dynamic", "badnets_patch", "blended", "sig_ramp"]
    lines = comparison_text(rows).splitlines()
    assert lines[0] == "trigger,ba,one_minus_r10,ssim,psnr"
    assert lines[1] == "dynamic,0.800000,0.700000,0.970000,41.500000"
    assert all(len(line.split(",")) == 5 for line in lines)


def test_comparison_table_needs_reports():
    with pytest.raises(ValueError, match="no evaluation reports"):
        comparison_table([])


def test_radar_axes_lie_in_unit_interval():
    for psnr in (12.0, 41.5, 75.0, math.inf):
        series = ComparisonRow.from_report(_report("x", psnr=psnr)).radar()
        assert all(0.0 <= v <= 1.0 for v in series.values())
    assert ComparisonRow.from_report(_report("x", psnr=math.inf)).radar()["psnr"] == 1.0
    assert ComparisonRow.from_report(_report("x", psnr=30.0)).radar()["psnr"] == pytest.approx(0.5)
    assert radar_text([ComparisonRow.from_report(_report("x"))]).splitlines()[1].startswith("x,0.800000,")


def test_distribution_text_totals_and_parse_back():
    text = distribution_text(SHIFT)
    lines = text.splitlines()
    assert lines[0] == "identity,before,after"
    assert lines[-2] == "total,12,14"
    assert lines[-1] == "# l1=0.142857"
    parsed = distribution_from_text(text)
    assert (parsed.before, parsed.after, parsed.l1) == (SHIFT.before, SHIFT.after, SHIFT.l1)


def test_report_over_runs():
    runs = [StoredRun("default", _report("dynamic"), SHIFT), StoredRun("badnets", _report("badnets_patch"), SHIFT)]
    text = report(runs)
    assert "[comparison]" in text and "[radar]" in text
    assert "[distribution default]" in text and "[distribution badnets]" in text
    with pytest.raises(ValueError, match="missing artifacts"):
        report([])


def test_load_run_reads_stamped_artifacts(tmp_path):
    store = ArtifactStore(tmp_path)
    store.put_text("default/abc/eval_backdoor.json", _report("dynamic").to_json(), "abc")
    store.put_text("default/abc/distribution.csv", distribution_text(SHIFT), "abc")
    run = load_run(store, "default/abc")
    assert run.name == "default"
    assert run.backdoor_report.metrics() == _report("dynamic").metrics()
    assert run.distribution.after == SHIFT.after


def test_load_run_errors(tmp_path):
    store = ArtifactStore(tmp_path)
    with pytest.raises(ValueError, match="<name>/<config_hash>"):
        load_run(store, "default")
    with pytest.raises(FileNotFoundError):
        load_run(store, "default/abc")
