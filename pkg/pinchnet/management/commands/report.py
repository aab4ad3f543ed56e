import logging

import pandas as pd

from pinchnet.base import PinchnetCommand, artifact_path, existing_file
from pinchnet.exceptions import ArtifactError


logger = logging.getLogger(__name__)

SIZE_COLUMNS = ["K", "B", "R", "M"]
GROUP_COLUMNS = ["mode"] + SIZE_COLUMNS
REQUIRED_COLUMNS = {"SR_bit_s_Hz", "EE_bit_J_Hz", "feasible", "infer_ms", *GROUP_COLUMNS}
MODE_ORDER = ["proposed", "oracle-assoc", "fixed-pa", "no-ris", "no-ris-fixed-pa", "random-assoc"]


def comparison_table(frame):
    """
    One row per (mode, K, B, R, M) with mean SR, EE and inference time, the feasible
    share and the SR gap of the proposed scheme over each row at the same size.
    """
    table = (
        frame.groupby(GROUP_COLUMNS, sort=False)
        .agg(
            n_samples=("SR_bit_s_Hz", "size"),
            mean_SR=("SR_bit_s_Hz", "mean"),
            mean_EE=("EE_bit_J_Hz", "mean"),
            mean_infer_ms=("infer_ms", "mean"),
            feasible_rate=("feasible", "mean"),
        )
        .reset_index()
    )
    proposed = table.loc[table["mode"] == "proposed", SIZE_COLUMNS + ["mean_SR"]]
    table = table.merge(proposed.rename(columns={"mean_SR": "proposed_SR"}), on=SIZE_COLUMNS, how="left")
    table["SR_gap_pct"] = 100.0 * (table["proposed_SR"] - table["mean_SR"]) / table["mean_SR"]
    extra = sorted(set(table["mode"]) - set(MODE_ORDER))
    table["mode"] = pd.Categorical(table["mode"], categories=MODE_ORDER + extra, ordered=True)
    return table.drop(columns="proposed_SR").sort_values(SIZE_COLUMNS + ["mode"]).reset_index(drop=True)


class Command(PinchnetCommand):
    """
    Combine per-sample evaluation CSVs into a comparison table.

    Each input CSV is the output of ``eval``; rows are grouped by mode and problem size.
    Evaluations at several PA counts produce one row per M, giving the PA-count trend.

    Usage:
        python manage.py report --in eval/proposed.csv eval/random.csv --out table.csv
    """

    help = "Build a comparison table from evaluation CSVs"

    def add_arguments(self, parser):
        parser.add_argument("--in", dest="inputs", nargs="+", required=True, help="evaluation CSVs")
        parser.add_argument("--out", required=True, help="table CSV to write")

    def run(self, *args, **options):
        frames = []
        for value in options["inputs"]:
            path = existing_file(value, "evaluation CSV")
            try:
                frame = pd.read_csv(path)
            except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
                raise ArtifactError(f"{path}: not a readable CSV ({exc})") from exc
            missing = REQUIRED_COLUMNS - set(frame.columns)
            if missing:
                raise ArtifactError(f"{path}: missing columns {sorted(missing)}")
            frames.append(frame)
        table = comparison_table(pd.concat(frames, ignore_index=True))
        out = artifact_path(options["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(out, index=False, float_format="%.6g")
        logger.info(f"Wrote comparison table with {len(table)} rows to {out}")
        self.stdout.write(table.to_string(index=False))
        self.stdout.write(self.style.SUCCESS(f"Wrote {out}"))
