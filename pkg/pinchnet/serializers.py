import logging
import math

from django.conf import settings
from rest_framework import serializers

from .exceptions import ConfigError
from .models import EpochRecord, EvaluationRecord, TrainingRun
from .network import ModelConfig
from .scenario import ScenarioConfig
from .training import TrainConfig


logger = logging.getLogger(__name__)


def _defaults(section):
    return dict(settings.PINCHNET.get(section, {}))


def db_to_linear(value):
    return 10 ** (value / 10)


def dbm_to_watts(value):
    return 10 ** ((value - 30) / 10)


class CommaListField(serializers.ListField):
    """List field that also accepts a comma-separated string, as key-value files provide."""

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [item.strip() for item in data.split(",") if item.strip()]
        return super().to_internal_value(data)


class DefaultsMixin:
    """Fills fields missing from the input with the defaults of a ``settings.PINCHNET`` section."""

    defaults_section = None

    def to_internal_value(self, data):
        merged = _defaults(self.defaults_section)
        merged.update(data)
        return super().to_internal_value(merged)


class ScenarioConfigSerializer(DefaultsMixin, serializers.Serializer):
    """
    Validates a deployment description and builds a ``ScenarioConfig``.

    Accepts unit-suffixed aliases:
    - sigma2_dbm: noise power in dBm, converted to watts.
    - kappa_db: Rician factor in dB, converted to linear.
    - beta0_db: reference channel gain in dB, converted to linear.

    ``lam`` is derived from ``f_c`` when absent. Every invariant of ``ScenarioConfig``
    is checked and reported against the offending field.
    """

    defaults_section = "SCENARIO"

    B = serializers.IntegerField(min_value=1)
    R = serializers.IntegerField(min_value=0)
    K = serializers.IntegerField(min_value=1)
    N = serializers.IntegerField(min_value=1)
    M = serializers.IntegerField(min_value=1)
    L = serializers.IntegerField(min_value=0)
    D = serializers.FloatField()
    S = serializers.FloatField()
    H_b = serializers.FloatField()
    C = serializers.FloatField()
    delta_wg = serializers.FloatField()
    P_max = serializers.FloatField()
    P_C = serializers.FloatField()
    sigma2 = serializers.FloatField(required=False, allow_null=True)
    sigma2_dbm = serializers.FloatField(required=False, write_only=True)
    f_c = serializers.FloatField()
    lam = serializers.FloatField(required=False, allow_null=True)
    n_eff = serializers.FloatField()
    zeta = serializers.FloatField()
    kappa = serializers.FloatField(required=False, allow_null=True)
    kappa_db = serializers.FloatField(required=False, write_only=True)
    alpha_pl = serializers.FloatField()
    beta0 = serializers.FloatField(required=False, allow_null=True)
    beta0_db = serializers.FloatField(required=False, write_only=True)
    delta_min = serializers.FloatField()
    elem_sep = serializers.FloatField(required=False, allow_null=True)
    seed = serializers.IntegerField(min_value=0)
    steering = serializers.ChoiceField(choices=["literal", "cosine"])

    ALIASES = {
        "sigma2_dbm": ("sigma2", dbm_to_watts),
        "kappa_db": ("kappa", db_to_linear),
        "beta0_db": ("beta0", db_to_linear),
    }

    def to_internal_value(self, data):
        data = dict(data)
        for alias, (target, _) in self.ALIASES.items():
            if alias in data and target not in data:
                # the alias wins over the settings default of its target
                data[target] = None
        return super().to_internal_value(data)

    def validate(self, data):
        for alias, (target, convert) in self.ALIASES.items():
            if alias in data:
                if self.initial_data.get(target) is not None:
                    raise serializers.ValidationError({alias: f"give either {alias} or {target}, not both"})
                data[target] = convert(data.pop(alias))
            elif data.get(target) is None:
                raise serializers.ValidationError({target: "This field is required."})
        for name in self.fields:
            value = data.get(name)
            if isinstance(value, float) and not math.isfinite(value):
                raise serializers.ValidationError({name: "must be finite"})
        try:
            self.config = ScenarioConfig(**data)
        except ConfigError as exc:
            field = str(exc).split(" ", 1)[0].split("=", 1)[0]
            key = field if field in self.fields else "non_field_errors"
            logger.warning(f"Scenario config rejected: {exc}")
            raise serializers.ValidationError({key: str(exc)})
        return data

    def create(self, validated_data):
        return self.config


class ModelConfigSerializer(DefaultsMixin, serializers.Serializer):
    """
    Validates architecture settings and builds a ``ModelConfig`` fitted to the
    scenario passed in the ``scenario`` context entry.
    """

    defaults_section = "MODEL"

    G1 = serializers.IntegerField(min_value=1)
    G2 = serializers.IntegerField(min_value=1)
    G3 = serializers.IntegerField(min_value=1)
    G4 = serializers.IntegerField(min_value=1)
    G5 = serializers.IntegerField(min_value=1)
    G6 = serializers.IntegerField(min_value=1)
    G7 = serializers.IntegerField(min_value=1)
    G8 = serializers.IntegerField(min_value=1)
    G9 = serializers.IntegerField(min_value=1)
    hidden_chan = serializers.IntegerField(min_value=1)
    hidden_beam = serializers.IntegerField(min_value=1)
    hidden_assoc = serializers.IntegerField(min_value=1)
    heads = serializers.IntegerField(min_value=1)
    tau = serializers.FloatField()
    message_passing = serializers.BooleanField()
    residual = serializers.BooleanField()
    cfl_stage1 = serializers.BooleanField()
    cfl_stage2 = serializers.BooleanField()
    cfl_stage3 = serializers.BooleanField()
    no_ris = serializers.BooleanField()
    fixed_pa = serializers.BooleanField()
    fixed_pa_spread = serializers.BooleanField()

    def validate(self, data):
        scenario_cfg = self.context.get("scenario")
        if scenario_cfg is None:
            raise serializers.ValidationError("a scenario config is required to size the model")
        if data["hidden_chan"] % data["heads"]:
            raise serializers.ValidationError({"heads": f"must divide hidden_chan={data['hidden_chan']}"})
        if not (data["message_passing"] or data["residual"]):
            raise serializers.ValidationError({"residual": "message_passing and residual cannot both be off"})
        try:
            self.config = ModelConfig.for_scenario(scenario_cfg, **data)
        except ConfigError as exc:
            logger.warning(f"Model config rejected: {exc}")
            raise serializers.ValidationError(str(exc))
        return data

    def create(self, validated_data):
        return self.config


class TrainConfigSerializer(DefaultsMixin, serializers.Serializer):
    """Validates optimization settings and builds a ``TrainConfig``."""

    defaults_section = "TRAINING"

    objective = serializers.ChoiceField(choices=["sr", "ee"])
    epochs = serializers.IntegerField(min_value=1)
    batch_size = serializers.IntegerField(min_value=1)
    lr = serializers.FloatField(min_value=0)
    milestones = CommaListField(child=serializers.IntegerField(min_value=1), allow_empty=True)
    gamma = serializers.FloatField(min_value=0)
    patience = serializers.IntegerField(min_value=1)
    min_delta = serializers.FloatField(min_value=0)
    n_samples = serializers.IntegerField(min_value=1)
    split = CommaListField(child=serializers.FloatField(min_value=0), min_length=3, max_length=3)
    seed = serializers.IntegerField(min_value=0)
    tau_anneal = serializers.BooleanField()
    tau_final = serializers.FloatField()

    def validate(self, data):
        data["milestones"] = tuple(data["milestones"])
        data["split"] = tuple(data["split"])
        try:
            self.config = TrainConfig(**data)
        except ConfigError as exc:
            logger.warning(f"Training config rejected: {exc}")
            raise serializers.ValidationError(str(exc))
        return data

    def create(self, validated_data):
        return self.config


class EpochRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = EpochRecord
        fields = ["epoch", "train_loss", "val_sr", "val_ee", "lr"]


class TrainingRunSerializer(serializers.ModelSerializer):
    """
    Serializer for the TrainingRun model.

    Fields:
    - id, objective, variant, config_hash, seed: Identify the run.
    - best_val_objective, epochs_run, stopped_early: Outcome of the training loop.
    - checkpoint_path, created_at: Where and when the weights were stored.
    - epoch_count: Number of recorded epochs (read-only).
    """

    epoch_count = serializers.IntegerField(source="epochs.count", read_only=True)

    class Meta:
        model = TrainingRun
        fields = [
            "id",
            "objective",
            "variant",
            "config_hash",
            "seed",
            "best_val_objective",
            "epochs_run",
            "stopped_early",
            "checkpoint_path",
            "created_at",
            "epoch_count",
        ]


class EvaluationRecordSerializer(serializers.ModelSerializer):

    class Meta:
        model = EvaluationRecord
        fields = [
            "id",
            "run",
            "mode",
            "k_test",
            "b_test",
            "r_test",
            "n_samples",
            "mean_sr",
            "mean_ee",
            "mean_infer_ms",
            "feasible_rate",
            "csv_path",
            "config_hash",
            "seed",
            "created_at",
        ]
