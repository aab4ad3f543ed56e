from django.db import models
from django.utils import timezone


class TrainingRun(models.Model):
    """
    Represents one execution of the ``train`` command.

    Attributes:
        objective (str): Training objective, sum rate ("sr") or energy efficiency ("ee").
        variant (str): Ablation variant the model was trained as ("full" by default).
        config_hash (str): Hash of the validated scenario, model and training configs.
        seed (int): Seed of the dataset stream and of the initialization.
        scenario_config / model_config / train_config (dict): The validated configs.
        checkpoint_path (str): Where the best weights were written.
        best_val_objective (float): Best validation SR or EE reached.
        epochs_run (int): Number of epochs completed.
        stopped_early (bool): Whether early stopping ended the run.
    """

    OBJECTIVE_CHOICES = [("sr", "Sum rate"), ("ee", "Energy efficiency")]
    objective = models.CharField(choices=OBJECTIVE_CHOICES, max_length=2)
    variant = models.CharField(max_length=40, default="full")
    config_hash = models.CharField(max_length=16, db_index=True)
    seed = models.PositiveIntegerField(default=0)
    scenario_config = models.JSONField(default=dict)
    model_config = models.JSONField(default=dict)
    train_config = models.JSONField(default=dict)
    checkpoint_path = models.CharField(max_length=500)
    best_val_objective = models.FloatField(null=True, blank=True)
    epochs_run = models.PositiveIntegerField(default=0)
    stopped_early = models.BooleanField(default=False)
    created_at = models.DateTimeField(default=timezone.now)

    def __str__(self):
        return f"{self.objective} run {self.config_hash} ({self.variant})"


class EpochRecord(models.Model):
    """
    One row of a training history.

    The `related_name="epochs"` on run allows reverse lookup of all epochs of a run.
    """

    run = models.ForeignKey(TrainingRun, on_delete=models.CASCADE, related_name="epochs")
    epoch = models.PositiveIntegerField()
    train_loss = models.FloatField()
    val_sr = models.FloatField(null=True, blank=True)
    val_ee = models.FloatField(null=True, blank=True)
    lr = models.FloatField()

    class Meta:
        ordering = ["epoch"]
        unique_together = [("run", "epoch")]


class EvaluationRecord(models.Model):
    """
    Aggregate outcome of one ``eval`` command.

    Attributes:
        run (ForeignKey): The training run whose checkpoint was evaluated, when known.
        mode (str): Evaluation mode (proposed, a baseline, or the oracle association).
        k_test / b_test / r_test (int): Problem size the model was evaluated at.
        mean_sr / mean_ee / mean_infer_ms (float): Means over the evaluated samples.
        feasible_rate (float): Share of samples whose decisions met every constraint.
        csv_path (str): Location of the per-sample CSV.
    """

    MODE_CHOICES = [
        ("proposed", "Proposed"),
        ("fixed-pa", "Fixed PA"),
        ("no-ris", "No RIS"),
        ("no-ris-fixed-pa", "No RIS, fixed PA"),
        ("random-assoc", "Random association"),
        ("oracle-assoc", "Oracle association"),
    ]
    run = models.ForeignKey(
        TrainingRun, on_delete=models.SET_NULL, null=True, blank=True, related_name="evaluations"
    )
    mode = models.CharField(choices=MODE_CHOICES, max_length=20)
    k_test = models.PositiveIntegerField()
    b_test = models.PositiveIntegerField(default=1)
    r_test = models.PositiveIntegerField(default=1)
    n_samples = models.PositiveIntegerField()
    mean_sr = models.FloatField()
    mean_ee = models.FloatField()
    mean_infer_ms = models.FloatField()
    feasible_rate = models.FloatField()
    csv_path = models.CharField(max_length=500)
    config_hash = models.CharField(max_length=16, db_index=True)
    seed = models.PositiveIntegerField(default=0)
    created_at = models.DateTimeField(default=timezone.now)

    def __str__(self):
        return f"{self.mode} at K={self.k_test}: SR {self.mean_sr:.3f}"
