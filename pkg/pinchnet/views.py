import logging

from rest_framework import generics
from rest_framework.exceptions import NotFound

from .models import EvaluationRecord, TrainingRun
from .serializers import EpochRecordSerializer, EvaluationRecordSerializer, TrainingRunSerializer


logger = logging.getLogger(__name__)

# GET /runs/
class TrainingRunList(generics.ListAPIView):
    """
    API view to list every recorded training run, newest first.

    Uses TrainingRunSerializer, which also reports how many epochs each run recorded.
    """

    serializer_class = TrainingRunSerializer

    def get_queryset(self):
        logger.info("Fetching list of training runs.")
        return TrainingRun.objects.all().order_by("-created_at", "-id")

# GET /runs/<id>/epochs/
class EpochHistoryList(generics.ListAPIView):
    """
    API view to list the training history of one run, in epoch order.

    Responds 404 when the run does not exist.
    """

    serializer_class = EpochRecordSerializer

    def get_queryset(self):
        run_id = self.kwargs["run_id"]
        run = TrainingRun.objects.filter(pk=run_id).first()
        if run is None:
            logger.warning(f"Epoch history requested for unknown run {run_id}")
            raise NotFound(f"Training run {run_id} does not exist.")
        logger.info(f"Fetching epoch history of run {run_id}")
        return run.epochs.order_by("epoch")

# GET /evaluations/?mode=proposed
class EvaluationRecordList(generics.ListAPIView):
    """
    API view to list evaluation summaries, optionally filtered by evaluation mode.

    An unknown ``mode`` yields an empty list and logs a warning.
    """

    serializer_class = EvaluationRecordSerializer

    def get_queryset(self):
        queryset = EvaluationRecord.objects.all().order_by("-created_at", "-id")
        mode = self.request.query_params.get("mode")
        if not mode:
            return queryset
        if mode not in dict(EvaluationRecord.MODE_CHOICES):
            logger.warning(f"Unknown evaluation mode filter: {mode}")
            return EvaluationRecord.objects.none()
        logger.info(f"Fetching evaluations in mode {mode}")
        return queryset.filter(mode=mode)
