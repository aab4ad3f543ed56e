from django.contrib import admin

from .models import EpochRecord, EvaluationRecord, TrainingRun


class EpochRecordInline(admin.TabularInline):
    model = EpochRecord
    extra = 0
    readonly_fields = ["epoch", "train_loss", "val_sr", "val_ee", "lr"]


@admin.register(TrainingRun)
class TrainingRunAdmin(admin.ModelAdmin):
    list_display = ["id", "objective", "variant", "config_hash", "best_val_objective", "epochs_run", "created_at"]
    list_filter = ["objective", "variant", "stopped_early"]
    search_fields = ["config_hash"]
    inlines = [EpochRecordInline]


@admin.register(EvaluationRecord)
class EvaluationRecordAdmin(admin.ModelAdmin):
    list_display = ["id", "mode", "k_test", "n_samples", "mean_sr", "mean_ee", "feasible_rate", "created_at"]
    list_filter = ["mode", "k_test"]
    search_fields = ["config_hash"]
