"""
URL configuration for the pinchnet app.

Read-only endpoints over the run registry:

- /runs/                  : Lists training runs. (GET)
- /runs/<id>/epochs/      : Training history of one run. (GET)
- /evaluations/           : Evaluation summaries, filterable with ?mode=. (GET)
"""
from django.urls import path

from .views import EpochHistoryList, EvaluationRecordList, TrainingRunList


urlpatterns = [
    path("runs/", TrainingRunList.as_view(), name="run-list"),
    path("runs/<int:run_id>/epochs/", EpochHistoryList.as_view(), name="epoch-list"),
    path("evaluations/", EvaluationRecordList.as_view(), name="evaluation-list"),
]
