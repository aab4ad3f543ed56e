import logging

import numpy as np

from pinchnet.base import PinchnetCommand, artifact_path, existing_file
from pinchnet.config import config_hash, load_configs
from pinchnet.models import EpochRecord, TrainingRun
from pinchnet.network import VARIANTS, check_compatible, init_params, model_variant
from pinchnet.storage import load_dataset, save_checkpoint
from pinchnet.training import OBJECTIVES, train, write_history_csv


logger = logging.getLogger(__name__)


class Command(PinchnetCommand):
    """
    Train the three-stage network on a stored dataset without labels.

    The scenario is taken from the dataset header; model and training settings come
    from the config file and the options. The best checkpoint (by validation
    objective) is written to ``--out`` together with a ``.history.csv`` next to it,
    and the run and its epochs are recorded in the database.

    Usage:
        python manage.py train --config run.cfg --data data/train.pnds --objective sr --out ckpt/sr.pnck
    """

    help = "Train a model on a dataset"

    def add_arguments(self, parser):
        parser.add_argument("--config", help="key-value config file")
        parser.add_argument("--data", required=True, help="dataset file")
        parser.add_argument("--objective", choices=OBJECTIVES, help="sum rate or energy efficiency")
        parser.add_argument("--out", required=True, help="checkpoint file to write")
        parser.add_argument("--variant", choices=sorted(VARIANTS), default="full", help="ablation variant")
        parser.add_argument("--epochs", type=int, help="override the number of epochs")
        parser.add_argument("--seed", type=int, help="seed of the initialization and shuffling")

    def run(self, *args, **options):
        dataset, header = load_dataset(existing_file(options["data"], "dataset"))
        scenario = dataset.scenario
        overrides = {key: options[key] for key in ("objective", "epochs", "seed")}
        run = load_configs(options["config"], overrides, scenario_cfg=scenario.config)
        model_cfg = model_variant(run.model, options["variant"])
        check_compatible(model_cfg, scenario.config)
        digest = config_hash(scenario.config, model_cfg, run.training)
        out = artifact_path(options["out"])

        record = TrainingRun.objects.create(
            objective=run.training.objective,
            variant=options["variant"],
            config_hash=digest,
            seed=run.training.seed,
            scenario_config=scenario.config.as_dict(),
            model_config=model_cfg.as_dict(),
            train_config=run.training.as_dict(),
            checkpoint_path=str(out),
        )
        logger.info(f"Training run {record.id}: {options['variant']} model, objective {run.training.objective}")

        def on_epoch(row):
            EpochRecord.objects.create(
                run=record,
                epoch=row["epoch"],
                train_loss=row["train_loss"],
                val_sr=_finite_or_none(row["val_SR"]),
                val_ee=_finite_or_none(row["val_EE"]),
                lr=row["lr"],
            )

        params = init_params(model_cfg, np.random.default_rng(run.training.seed))
        result = train(scenario, dataset, params, run.training, on_epoch=on_epoch)

        save_checkpoint(
            out,
            result.params,
            scenario_cfg=scenario.config,
            train_cfg=run.training,
            config_hash=digest,
            seed=run.training.seed,
            extra={"variant": options["variant"], "dataset_hash": header.get("config_hash", "")},
        )
        history_path = out.with_name(out.name + ".history.csv")
        write_history_csv(result.history, history_path)

        record.best_val_objective = _finite_or_none(result.best_val)
        record.epochs_run = result.epochs_run
        record.stopped_early = result.stopped_early
        record.save(update_fields=["best_val_objective", "epochs_run", "stopped_early"])
        self.stdout.write(
            self.style.SUCCESS(
                f"Run {record.id}: {result.epochs_run} epochs, best validation "
                f"{run.training.objective.upper()} {result.best_val:.4f}; checkpoint {out}"
            )
        )


def _finite_or_none(value):
    return float(value) if value is not None and np.isfinite(value) else None
