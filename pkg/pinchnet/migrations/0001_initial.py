# Generated by Django 5.2.2 on 2026-10-19 10:00

import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="TrainingRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "objective",
                    models.CharField(
                        choices=[("sr", "Sum rate"), ("ee", "Energy efficiency")],
                        max_length=2,
                    ),
                ),
                ("variant", models.CharField(default="full", max_length=40)),
                ("config_hash", models.CharField(db_index=True, max_length=16)),
                ("seed", models.PositiveIntegerField(default=0)),
                ("scenario_config", models.JSONField(default=dict)),
                ("model_config", models.JSONField(default=dict)),
                ("train_config", models.JSONField(default=dict)),
                ("checkpoint_path", models.CharField(max_length=500)),
                ("best_val_objective", models.FloatField(blank=True, null=True)),
                ("epochs_run", models.PositiveIntegerField(default=0)),
                ("stopped_early", models.BooleanField(default=False)),
                ("created_at", models.DateTimeField(default=django.utils.timezone.now)),
            ],
        ),
        migrations.CreateModel(
            name="EpochRecord",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("epoch", models.PositiveIntegerField()),
                ("train_loss", models.FloatField()),
                ("val_sr", models.FloatField(blank=True, null=True)),
                ("val_ee", models.FloatField(blank=True, null=True)),
                ("lr", models.FloatField()),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="epochs",
                        to="pinchnet.trainingrun",
                    ),
                ),
            ],
            options={
                "ordering": ["epoch"],
                "unique_together": {("run", "epoch")},
            },
        ),
        migrations.CreateModel(
            name="EvaluationRecord",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "mode",
                    models.CharField(
                        choices=[
                            ("proposed", "Proposed"),
                            ("fixed-pa", "Fixed PA"),
                            ("no-ris", "No RIS"),
                            ("no-ris-fixed-pa", "No RIS, fixed PA"),
                            ("random-assoc", "Random association"),
                            ("oracle-assoc", "Oracle association"),
                        ],
                        max_length=20,
                    ),
                ),
                ("k_test", models.PositiveIntegerField()),
                ("b_test", models.PositiveIntegerField(default=1)),
                ("r_test", models.PositiveIntegerField(default=1)),
                ("n_samples", models.PositiveIntegerField()),
                ("mean_sr", models.FloatField()),
                ("mean_ee", models.FloatField()),
                ("mean_infer_ms", models.FloatField()),
                ("feasible_rate", models.FloatField()),
                ("csv_path", models.CharField(max_length=500)),
                ("config_hash", models.CharField(db_index=True, max_length=16)),
                ("seed", models.PositiveIntegerField(default=0)),
                ("created_at", models.DateTimeField(default=django.utils.timezone.now)),
                (
                    "run",
                    models.ForeignKey(
                        blank=True,
                        null=True,
                        on_delete=django.db.models.deletion.SET_NULL,
                        related_name="evaluations",
                        to="pinchnet.trainingrun",
                    ),
                ),
            ],
        ),
    ]
