import pytest

from common.errors import StageError
from common.storage import ArtifactStore
from reidlab.core.service import (
    AblationTable,
    ExperimentRunner,
    ablate,
    ablation_configs,
    run_experiment,
)

pytestmark = pytest.mark.integration

RUN_FILES = (
    "dataset/manifest.jsonl",
    "hashnet.pt",
    "poisoned/manifest.jsonl",
    "poison_records.tsv",
    "reid_clean.pt",
    "reid_backdoor.pt",
    "eval_backdoor.txt",
    "eval_clean.txt",
    "eval_backdoor.json",
    "distribution.csv",
    "prune_curve.csv",
    "metrics.prom",
    "report.txt",
)


@pytest.fixture(scope="module")
def tiny_run(tiny_experiment_config, tmp_path_factory):
    store = ArtifactStore(tmp_path_factory.mktemp("run"))
    return store, run_experiment(tiny_experiment_config, store)


def test_run_writes_every_artifact(tiny_run, tiny_experiment_config):
    store, artifacts = tiny_run
    assert artifacts.run_dir == store.path(f"tiny/{tiny_experiment_config.config_hash()}")
    for name in RUN_FILES:
        assert (artifacts.run_dir / name).exists(), name
    # fewer than 100 clean training images
    assert artifacts.detector_report is None
    assert not (artifacts.run_dir / "detector.txt").exists()


def test_run_invariants_hold(tiny_run, tiny_experiment_config):
    _, artifacts = tiny_run
    assert artifacts.ok, artifacts.invariant_failures
    assert artifacts.backdoor_report.unseen_target_fraction == 1.0
    assert artifacts.n_poisoned == int(0.4 * 24)
    assert [p.fraction for p in artifacts.prune_curve.points] == [0.0, 0.5]


def test_text_artifacts_are_stamped(tiny_run, tiny_experiment_config):
    _, artifacts = tiny_run
    stamp = f"# config_hash={tiny_experiment_config.config_hash()}\n"
    for name in ("eval_backdoor.txt", "distribution.csv", "prune_curve.csv", "report.txt", "poison_records.tsv"):
        assert (artifacts.run_dir / name).read_text().startswith(stamp), name
    report = (artifacts.run_dir / "report.txt").read_text()
    assert "[backdoored model]" in report and "[invariants]\nall held" in report


def test_fresh_rerun_is_byte_identical(tiny_run, tiny_experiment_config, tmp_path):
    _, first = tiny_run
    second = run_experiment(tiny_experiment_config, ArtifactStore(tmp_path))
    for name in ("eval_backdoor.txt", "eval_clean.txt", "distribution.csv", "prune_curve.csv", "poison_records.tsv"):
        assert (second.run_dir / name).read_bytes() == (first.run_dir / name).read_bytes(), name


def test_cached_rerun_matches(tiny_run, tiny_experiment_config):
    store, first = tiny_run
    before = (first.run_dir / "eval_backdoor.txt").read_bytes()
    again = run_experiment(tiny_experiment_config, store)
    assert (again.run_dir / "eval_backdoor.txt").read_bytes() == before


def test_zero_rate_models_match_the_clean_model(tiny_experiment_config, tmp_path):
    config = tiny_experiment_config.model_copy(update={
        "name": "tiny_zero",
        "poison": tiny_experiment_config.poison.model_copy(update={"rate": 0.0, "trigger": "badnets_patch"}),
        "defense": tiny_experiment_config.defense.model_copy(update={"enabled": False}),
    })
    artifacts = run_experiment(config, ArtifactStore(tmp_path))
    assert artifacts.n_poisoned == 0
    assert artifacts.backdoor_report.metrics() == artifacts.clean_report.metrics()
    assert artifacts.backdoor_report.asr_targeted is None
    assert artifacts.ok
    assert artifacts.prune_curve is None


def test_stage_failure_keeps_upstream_artifacts(tiny_experiment_config, tmp_path, mocker):
    mocker.patch("reidlab.core.service.train_hashnet", side_effect=RuntimeError("boom"))
    runner = ExperimentRunner(tiny_experiment_config, ArtifactStore(tmp_path))
    with pytest.raises(StageError) as excinfo:
        runner.run()
    assert excinfo.value.stage == "train-hash"
    assert (runner.run_dir / "dataset" / "manifest.jsonl").exists()
    assert not (runner.run_dir / "hashnet.pt").exists()


def test_stage_seeds_differ(tiny_experiment_config, tmp_path):
    runner = ExperimentRunner(tiny_experiment_config, ArtifactStore(tmp_path))
    seeds = {runner.seed(stage) for stage in ("gen", "train-hash", "poison", "train-reid")}
    assert len(seeds) == 4


def test_ablation_configs(tiny_experiment_config):
    configs = ablation_configs(tiny_experiment_config, "poison_rate", [0.1, 0.25])
    assert [c.name for c in configs] == ["tiny_poison_rate_0_1", "tiny_poison_rate_0_25"]
    assert [c.poison.rate for c in configs] == [0.1, 0.25]
    assert configs[0].config_hash() != configs[1].config_hash()
    assert ablation_configs(tiny_experiment_config, "code_length", [64])[0].hashnet.code_length == 64


@pytest.mark.parametrize("axis, values, message", [
    ("poison_rate", [], "at least one value"),
    ("poison_rate", [1.5], "outside"),
    ("code_length", [100], "not in"),
    ("temperature", [1.0], "Unknown ablation axis"),
])
def test_ablation_config_errors(tiny_experiment_config, axis, values, message):
    with pytest.raises(ValueError, match=message):
        ablation_configs(tiny_experiment_config, axis, values)


def test_ablate_writes_the_table(tiny_experiment_config, tmp_path, mocker):
    def fake_run(config, store):
        artifacts = mocker.Mock()
        artifacts.name = config.name
        artifacts.backdoor_report = mocker.Mock(ba=0.8, asr_targeted=config.poison.rate, asr_nontargeted=0.0)
        return artifacts

    mocker.patch("reidlab.core.service.run_experiment", side_effect=fake_run)
    store = ArtifactStore(tmp_path)
    table = ablate(tiny_experiment_config, "poison_rate", [0.1, 0.6], store)
    assert isinstance(table, AblationTable)
    assert table.best().value == 0.6
    assert store.get_text("tiny/ablation_poison_rate.csv", tiny_experiment_config.config_hash()) == table.to_text()
