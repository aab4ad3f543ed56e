import logging

from pinchnet.base import PinchnetCommand, artifact_path
from pinchnet.config import load_configs
from pinchnet.storage import save_dataset
from pinchnet.training import generate_dataset


logger = logging.getLogger(__name__)


class Command(PinchnetCommand):
    """
    Generate a dataset of i.i.d. channel samples over a fixed deployment.

    The deployment comes from the config file (missing keys use the settings defaults).
    Sample i depends only on (seed, i), so a dataset is reproducible from its header.

    Usage:
        python manage.py generate --config run.cfg --out data/train.pnds --samples 5000
    """

    help = "Generate a dataset of channel samples"

    def add_arguments(self, parser):
        parser.add_argument("--config", help="key-value config file")
        parser.add_argument("--out", required=True, help="dataset file to write")
        parser.add_argument("--samples", type=int, help="number of samples (default n_samples)")
        parser.add_argument("--seed", type=int, help="seed of the sample stream")

    def run(self, *args, **options):
        run = load_configs(options["config"], {"seed": options["seed"]})
        n_samples = options["samples"] or run.training.n_samples
        dataset = generate_dataset(run.scenario, n_samples=n_samples, seed=run.training.seed, split=run.training.split)
        out = artifact_path(options["out"])
        save_dataset(out, dataset, config_hash=run.config_hash)
        sizes = ", ".join(f"{name}={len(idx)}" for name, idx in dataset.splits.items())
        self.stdout.write(self.style.SUCCESS(f"Wrote {n_samples} samples to {out} ({sizes}; hash {run.config_hash})"))
