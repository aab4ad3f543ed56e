import logging

from pinchnet.base import PinchnetCommand
from pinchnet.checks import run_selftest


logger = logging.getLogger(__name__)


class Command(PinchnetCommand):
    """
    Run the gradient checks, the scalar-oracle comparisons, the readout limits and the
    feasibility sweep on a small deployment.

    Exits with status 3 when any check fails.

    Usage:
        python manage.py selftest [--full]
    """

    help = "Verify gradients, rates and feasibility on a small deployment"

    def add_arguments(self, parser):
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--full", action="store_true", help="five times more random instances")

    def run(self, *args, **options):
        results = run_selftest(seed=options["seed"], quick=not options["full"])
        for result in results:
            status = self.style.SUCCESS("ok") if result.passed else self.style.ERROR("FAILED")
            detail = f" ({result.detail})" if result.detail else ""
            self.stdout.write(f"{status:>6}  {result.name}: {result.value:.3g} < {result.threshold:g}{detail}")
        failed = [r.name for r in results if not r.passed]
        if failed:
            self.fail(f"{len(failed)} self-test checks failed: {', '.join(failed)}")
        self.stdout.write(self.style.SUCCESS(f"All {len(results)} checks passed"))
