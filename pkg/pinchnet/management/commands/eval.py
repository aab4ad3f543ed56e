import json
import logging

from django.conf import settings

from pinchnet.base import PinchnetCommand, artifact_path, existing_file
from pinchnet.models import EvaluationRecord, TrainingRun
from pinchnet.network import check_compatible
from pinchnet.scenario import build_scenario
from pinchnet.storage import load_checkpoint, load_dataset
from pinchnet.training import EVAL_MODES, evaluate_split, generate_dataset, summarize


logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "sample_id",
    "K",
    "B",
    "R",
    "SR_bit_s_Hz",
    "EE_bit_J_Hz",
    "power_W_per_bs",
    "feasible",
    "infer_ms",
]
METADATA_COLUMNS = ["mode", "M", "config_hash", "seed"]


class Command(PinchnetCommand):
    """
    Evaluate a checkpoint on the test split of a dataset.

    Writes one CSV row per sample (columns in ``CSV_COLUMNS`` followed by the mode, the
    PA count, the checkpoint's config hash and the seed) and prints the aggregate
    summary. ``--k-test``, ``--b-test`` and ``--r-test`` evaluate on a fresh test set
    of a different problem size drawn with the dataset's seed; the network is reused
    without retraining. Samples are evaluated in parallel on ``PINCHNET_THREADS``
    threads. An infeasible output ends the command with exit status 3 after the CSV
    is written.

    Usage:
        python manage.py eval --ckpt ckpt/sr.pnck --data data/train.pnds --mode proposed --out eval/proposed.csv
    """

    help = "Evaluate a checkpoint"

    def add_arguments(self, parser):
        parser.add_argument("--ckpt", required=True, help="checkpoint file")
        parser.add_argument("--data", required=True, help="dataset file")
        parser.add_argument("--mode", choices=EVAL_MODES, default="proposed")
        parser.add_argument("--k-test", type=int, help="number of UEs to test at")
        parser.add_argument("--b-test", type=int, help="number of BSs to test at")
        parser.add_argument("--r-test", type=int, help="number of RISs to test at")
        parser.add_argument("--out", help="per-sample CSV (default eval-<mode>.csv)")
        parser.add_argument("--seed", type=int, default=0, help="seed of the random-association draws")
        parser.add_argument("--threads", type=int, default=settings.PINCHNET["THREADS"])

    def run(self, *args, **options):
        params, ckpt_header = load_checkpoint(existing_file(options["ckpt"], "checkpoint"))
        dataset, _ = load_dataset(existing_file(options["data"], "dataset"))
        mode = options["mode"]

        cfg = dataset.scenario.config
        changes = {
            name: options[option]
            for name, option in (("K", "k_test"), ("B", "b_test"), ("R", "r_test"))
            if options[option] is not None
        }
        if changes:
            cfg = cfg.replace(**changes)
            n_test = max(len(dataset.splits["test"]), 1)
            dataset = generate_dataset(cfg, build_scenario(cfg), n_test, dataset.seed, split=(0, 0, 1))
            logger.info(f"Evaluating at unseen size {changes} on {n_test} fresh samples")
        check_compatible(params.config, cfg)

        frame = evaluate_split(
            dataset.scenario,
            dataset,
            params,
            "test",
            mode,
            batch_size=128,
            seed=options["seed"],
            workers=max(1, options["threads"]),
        )
        digest = ckpt_header.get("config_hash", "")
        frame = frame[CSV_COLUMNS].assign(mode=mode, M=cfg.M, config_hash=digest, seed=options["seed"])
        out = artifact_path(options["out"] or f"eval-{mode}.csv")
        out.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False)
        summary = summarize(frame)
        logger.info(f"Evaluation {mode} at K={cfg.K}: {summary}")

        EvaluationRecord.objects.create(
            run=TrainingRun.objects.filter(checkpoint_path=str(artifact_path(options["ckpt"]))).order_by("-id").first(),
            mode=mode,
            k_test=cfg.K,
            b_test=cfg.B,
            r_test=cfg.R,
            n_samples=summary["n_samples"],
            mean_sr=summary["mean_SR"],
            mean_ee=summary["mean_EE"],
            mean_infer_ms=summary["mean_infer_ms"],
            feasible_rate=summary["feasible_rate"],
            csv_path=str(out),
            config_hash=digest,
            seed=options["seed"],
        )
        self.stdout.write(json.dumps({"mode": mode, "K": cfg.K, "B": cfg.B, "R": cfg.R, **summary}, indent=2))
        if summary["feasible_rate"] < 1.0:
            self.fail(f"{summary['n_samples'] - int(frame['feasible'].sum())} infeasible samples; see {out}")
        self.stdout.write(self.style.SUCCESS(f"Wrote {summary['n_samples']} rows to {out}"))
