import json
from io import StringIO

import pandas as pd
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from pinchnet.checks import CheckResult
from pinchnet.management.commands import eval as eval_command
from pinchnet.management.commands import selftest as selftest_command
from pinchnet.models import EpochRecord, EvaluationRecord, TrainingRun
from pinchnet.storage import load_checkpoint, load_dataset


TINY_CONFIG = """\
# two BSs, one RIS, two UEs
B = 2
R = 1
K = 2
N = 2
M = 2
L = 4
G1 = 1
G2 = 1
G3 = 1
G4 = 1
G5 = 1
G6 = 1
G7 = 1
G8 = 1
G9 = 1
hidden_chan = 4
hidden_beam = 4
hidden_assoc = 4
heads = 2
epochs = 2
batch_size = 8
n_samples = 20
lr = 1e-3
"""


@pytest.fixture
def run_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG, encoding="utf-8")
    return path


@pytest.fixture
def dataset_file(tmp_path, run_config):
    out = tmp_path / "data" / "tiny.pnds"
    call_command("generate", "--config", str(run_config), "--out", str(out), "--seed", "5")
    return out


@pytest.fixture
def checkpoint_file(tmp_path, run_config, dataset_file):
    out = tmp_path / "ckpt" / "sr.pnck"
    call_command("train", "--config", str(run_config), "--data", str(dataset_file), "--objective", "sr", "--out", str(out))
    return out


def test_generate_writes_a_reproducible_dataset(tmp_path, run_config, dataset_file):
    dataset, header = load_dataset(dataset_file)
    assert len(dataset) == 20
    assert header["seed"] == 5
    assert dataset.scenario.config.B == 2
    again = tmp_path / "again.pnds"
    call_command("generate", "--config", str(run_config), "--out", str(again), "--seed", "5")
    assert again.read_bytes() == dataset_file.read_bytes()


def test_generate_rejects_bad_config(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("K = 5\nN = 2\n", encoding="utf-8")
    with pytest.raises(CommandError) as excinfo:
        call_command("generate", "--config", str(path), "--out", str(tmp_path / "x.pnds"))
    assert excinfo.value.returncode == 2


@pytest.mark.django_db
def test_train_records_the_run(checkpoint_file):
    run = TrainingRun.objects.get()
    assert run.objective == "sr"
    assert run.variant == "full"
    assert run.epochs_run == 2
    assert run.checkpoint_path == str(checkpoint_file)
    assert list(EpochRecord.objects.filter(run=run).values_list("epoch", flat=True)) == [1, 2]

    params, header = load_checkpoint(checkpoint_file)
    assert header["config_hash"] == run.config_hash
    assert header["extra"]["variant"] == "full"
    assert params.config.hidden_chan == 4
    history = pd.read_csv(checkpoint_file.with_name("sr.pnck.history.csv"))
    assert history["epoch"].tolist() == [1, 2]


@pytest.mark.django_db
def test_train_variant(tmp_path, run_config, dataset_file):
    out = tmp_path / "no-ris.pnck"
    call_command(
        "train", "--config", str(run_config), "--data", str(dataset_file),
        "--out", str(out), "--variant", "no-ris", "--epochs", "1",
    )
    params, _ = load_checkpoint(out)
    assert params.config.no_ris
    assert TrainingRun.objects.get().variant == "no-ris"


@pytest.mark.django_db
def test_train_with_missing_dataset(tmp_path):
    with pytest.raises(CommandError) as excinfo:
        call_command("train", "--data", str(tmp_path / "absent.pnds"), "--out", str(tmp_path / "x.pnck"))
    assert excinfo.value.returncode == 3


@pytest.mark.django_db
@pytest.mark.parametrize("mode", ["proposed", "random-assoc", "oracle-assoc"])
def test_eval_writes_csv_and_summary(tmp_path, checkpoint_file, dataset_file, mode):
    out = tmp_path / f"eval-{mode}.csv"
    stdout = StringIO()
    call_command(
        "eval", "--ckpt", str(checkpoint_file), "--data", str(dataset_file), "--mode", mode, "--out", str(out), stdout=stdout
    )

    frame = pd.read_csv(out)
    assert list(frame.columns) == eval_command.CSV_COLUMNS + eval_command.METADATA_COLUMNS
    assert (frame["mode"] == mode).all()
    assert (frame["feasible"] == 1).all()

    record = EvaluationRecord.objects.get()
    assert record.run == TrainingRun.objects.get()
    assert record.n_samples == len(frame)
    assert record.feasible_rate == 1.0
    summary = json.loads(stdout.getvalue().split("\nWrote")[0])
    assert summary["mode"] == mode
    assert summary["mean_SR"] == pytest.approx(frame["SR_bit_s_Hz"].mean())


@pytest.mark.django_db
def test_eval_at_a_smaller_ue_count(tmp_path, checkpoint_file, dataset_file):
    out = tmp_path / "k1.csv"
    call_command("eval", "--ckpt", str(checkpoint_file), "--data", str(dataset_file), "--k-test", "1", "--out", str(out))
    frame = pd.read_csv(out)
    assert (frame["K"] == 1).all()
    assert EvaluationRecord.objects.get().k_test == 1


@pytest.mark.django_db
def test_eval_default_output_goes_to_artifact_dir(tmp_path, settings, checkpoint_file, dataset_file):
    settings.PINCHNET = {**settings.PINCHNET, "ARTIFACT_DIR": tmp_path / "artifacts"}
    call_command("eval", "--ckpt", str(checkpoint_file), "--data", str(dataset_file))
    assert (tmp_path / "artifacts" / "eval-proposed.csv").is_file()


@pytest.mark.django_db
def test_eval_rejects_too_many_ues(tmp_path, checkpoint_file, dataset_file):
    with pytest.raises(CommandError) as excinfo:
        call_command("eval", "--ckpt", str(checkpoint_file), "--data", str(dataset_file), "--k-test", "3")
    assert excinfo.value.returncode == 2


@pytest.mark.django_db
def test_eval_fails_on_infeasible_output(tmp_path, monkeypatch, checkpoint_file, dataset_file):
    real = eval_command.evaluate_split

    def infeasible(*args, **kwargs):
        return real(*args, **kwargs).assign(feasible=0)

    monkeypatch.setattr(eval_command, "evaluate_split", infeasible)
    out = tmp_path / "bad.csv"
    with pytest.raises(CommandError) as excinfo:
        call_command("eval", "--ckpt", str(checkpoint_file), "--data", str(dataset_file), "--out", str(out))
    assert excinfo.value.returncode == 3
    assert out.is_file()


def _eval_rows(mode, sr, K=2, M=2):
    return pd.DataFrame(
        {
            "sample_id": [0, 1],
            "K": K,
            "B": 2,
            "R": 1,
            "SR_bit_s_Hz": sr,
            "EE_bit_J_Hz": [0.1, 0.3],
            "power_W_per_bs": "1;1",
            "feasible": 1,
            "infer_ms": [1.0, 3.0],
            "mode": mode,
            "M": M,
            "config_hash": "abc",
            "seed": 0,
        }
    )


def test_report_compares_modes(tmp_path):
    inputs = []
    for mode, sr in (("proposed", [2.0, 4.0]), ("random-assoc", [1.0, 2.0]), ("oracle-assoc", [3.0, 5.0])):
        path = tmp_path / f"{mode}.csv"
        _eval_rows(mode, sr).to_csv(path, index=False)
        inputs.append(str(path))
    out = tmp_path / "table.csv"
    call_command("report", "--in", *inputs, "--out", str(out))

    table = pd.read_csv(out).set_index("mode")
    assert list(table.index) == ["proposed", "oracle-assoc", "random-assoc"]
    assert table.loc["proposed", "mean_SR"] == pytest.approx(3.0)
    assert table.loc["proposed", "SR_gap_pct"] == pytest.approx(0.0)
    assert table.loc["random-assoc", "SR_gap_pct"] == pytest.approx(100.0)
    assert table.loc["oracle-assoc", "SR_gap_pct"] == pytest.approx(-25.0)
    assert table.loc["proposed", "mean_infer_ms"] == pytest.approx(2.0)


def test_report_groups_by_pa_count(tmp_path):
    path = tmp_path / "sweep.csv"
    pd.concat([_eval_rows("proposed", [1.0, 1.0], M=2), _eval_rows("proposed", [2.0, 2.0], M=4)]).to_csv(path, index=False)
    out = tmp_path / "table.csv"
    call_command("report", "--in", str(path), "--out", str(out))
    table = pd.read_csv(out)
    assert table["M"].tolist() == [2, 4]
    assert table["mean_SR"].tolist() == [1.0, 2.0]


def test_report_rejects_foreign_csv(tmp_path):
    path = tmp_path / "other.csv"
    pd.DataFrame({"a": [1]}).to_csv(path, index=False)
    with pytest.raises(CommandError) as excinfo:
        call_command("report", "--in", str(path), "--out", str(tmp_path / "t.csv"))
    assert excinfo.value.returncode == 3


def test_selftest_passes():
    stdout = StringIO()
    call_command("selftest", stdout=stdout)
    output = stdout.getvalue()
    assert "FAILED" not in output
    assert "checks passed" in output


def test_selftest_failure_exits_with_status_three(monkeypatch):
    failing = [CheckResult("rate oracle", 1.0, 1e-10, False, "forced")]
    monkeypatch.setattr(selftest_command, "run_selftest", lambda seed, quick: failing)
    with pytest.raises(CommandError) as excinfo:
        call_command("selftest")
    assert excinfo.value.returncode == 3
