"""Validation of TOML experiment configs into :class:`ExperimentConfig`."""

from __future__ import annotations

import logging
import tomllib
from pathlib import Path

from rest_framework import serializers

from proactive_scheduling.apps.scheduling.channel import ChannelKind
from proactive_scheduling.apps.scheduling.channel import build_channel
from proactive_scheduling.apps.scheduling.core import ContractError
from proactive_scheduling.apps.scheduling.mobility import LocationModel
from proactive_scheduling.apps.scheduling.online import GridSpec

from .engine import ExperimentConfig
from .engine import MobilityConfig
from .engine import MobilityMode
from .engine import Scheduler

logger = logging.getLogger(__name__)

MAX_SEED = 2**64 - 1


class ConfigError(Exception):
    """Malformed or invalid experiment configuration"""

    def __init__(self, message: str, diagnostics: list[str] | None = None):
        self.diagnostics = diagnostics or []
        super().__init__("\n".join([message, *self.diagnostics]) if self.diagnostics else message)


class StrictSerializer(serializers.Serializer):
    """Rejects keys it does not declare, so typos in a config file surface."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ["Unknown field."] for key in unknown})
        return super().to_internal_value(data)


class ChannelSerializer(StrictSerializer):
    kind = serializers.ChoiceField(
        choices=[k.value for k in ChannelKind],
        default=ChannelKind.TRUNCATED_EXPONENTIAL.value,
    )
    rate = serializers.FloatField(default=1.0)
    threshold = serializers.FloatField(default=0.001, min_value=0.0)
    gain = serializers.FloatField(default=1.0)
    samples = serializers.ListField(child=serializers.FloatField(), required=False, allow_empty=False)

    def validate_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be positive.")
        return value

    def validate_gain(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be positive.")
        return value

    def validate(self, attrs):
        if attrs["kind"] == ChannelKind.EMPIRICAL and not attrs.get("samples"):
            raise serializers.ValidationError({"samples": ["Required for the empirical channel."]})
        if any(s <= 0 for s in attrs.get("samples", ())):
            raise serializers.ValidationError({"samples": ["Gains must be positive."]})
        return attrs

    def create(self, validated_data):
        return build_channel(validated_data.pop("kind"), **validated_data)


class MobilitySerializer(StrictSerializer):
    mode = serializers.ChoiceField(choices=[m.value for m in MobilityMode], default=MobilityMode.MARKOV.value)
    k = serializers.IntegerField(min_value=1, default=3)
    transition = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), allow_empty=False),
        required=False,
        allow_empty=False,
    )
    request_stats = serializers.ListField(
        child=serializers.FloatField(min_value=0.0, max_value=1.0),
        required=False,
        allow_empty=False,
    )
    fixed_model = serializers.BooleanField(default=False)
    p2 = serializers.ListField(
        child=serializers.FloatField(min_value=0.0, max_value=1.0),
        required=False,
        allow_empty=False,
    )

    def validate(self, attrs):
        has_matrix, has_stats = "transition" in attrs, "request_stats" in attrs
        if has_matrix != has_stats:
            missing = "request_stats" if has_matrix else "transition"
            raise serializers.ValidationError({missing: ["Required together with the other model field."]})
        if has_matrix:
            try:
                model = LocationModel(transition=attrs["transition"], request_stats=attrs["request_stats"])
            except ContractError as exc:
                raise serializers.ValidationError({"transition": [str(exc)]}) from exc
            attrs["k"] = model.k
        return attrs

    def create(self, validated_data):
        data = dict(validated_data)
        data["mode"] = MobilityMode(data["mode"])
        if "transition" in data:
            data["transition"] = tuple(tuple(row) for row in data["transition"])
            data["request_stats"] = tuple(data["request_stats"])
        if "p2" in data:
            data["p2"] = tuple(data["p2"])
        return MobilityConfig(**data)

    def build_model(self) -> LocationModel:
        """Location model of an explicit [mobility] table."""
        data = self.validated_data
        if "transition" not in data:
            raise serializers.ValidationError({"transition": ["An explicit transition matrix is required."]})
        return LocationModel(transition=data["transition"], request_stats=data["request_stats"])


class GridSerializer(StrictSerializer):
    n_beta = serializers.IntegerField(min_value=2, default=GridSpec.n_beta)
    n_p = serializers.IntegerField(min_value=2, default=GridSpec.n_p)
    n_b = serializers.IntegerField(min_value=3, default=GridSpec.n_b)
    n_h = serializers.IntegerField(min_value=1, default=GridSpec.n_h)
    refine_tol = serializers.FloatField(default=GridSpec.refine_tol)

    def validate_refine_tol(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be positive.")
        return value

    def create(self, validated_data):
        return GridSpec(**validated_data)


class ExperimentConfigSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0)
    n_trials = serializers.IntegerField(min_value=1, default=1000)
    bits = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    windows = serializers.ListField(child=serializers.IntegerField(min_value=0), allow_empty=False)
    schedulers = serializers.ListField(
        child=serializers.ChoiceField(choices=[s.value for s in Scheduler]),
        allow_empty=False,
    )
    dump_trials = serializers.BooleanField(default=False)
    channel = ChannelSerializer(required=False)
    mobility = MobilitySerializer(required=False)
    grids = GridSerializer(required=False)

    def validate_bits(self, value):
        if any(b <= 0 for b in value):
            raise serializers.ValidationError("Packet sizes must be positive.")
        return value

    def validate_schedulers(self, value):
        return list(dict.fromkeys(value))

    def validate(self, attrs):
        mobility = attrs.get("mobility", {})
        if mobility.get("mode") == MobilityMode.FIXED_P and "p2" not in mobility:
            raise serializers.ValidationError({"mobility": {"p2": ["Required in fixed_p mode."]}})
        return attrs

    def create(self, validated_data):
        channel = _nested(ChannelSerializer, validated_data.get("channel"))
        mobility = _nested(MobilitySerializer, validated_data.get("mobility"))
        grids = _nested(GridSerializer, validated_data.get("grids"))
        try:
            return ExperimentConfig(
                bits=tuple(validated_data["bits"]),
                windows=tuple(sorted(set(validated_data["windows"]))),
                schedulers=tuple(Scheduler(s) for s in validated_data["schedulers"]),
                n_trials=validated_data["n_trials"],
                seed=validated_data["seed"],
                channel=channel,
                mobility=mobility,
                grids=grids,
                dump_trials=validated_data["dump_trials"],
            )
        except ContractError as exc:
            raise serializers.ValidationError({"non_field_errors": [str(exc)]}) from exc


def _nested(serializer_class, validated: dict | None):
    """Instance for a nested table, applying defaults when the table is absent."""
    if validated is None:
        serializer = serializer_class(data={})
        serializer.is_valid(raise_exception=True)
        validated = serializer.validated_data
    return serializer_class().create(dict(validated))


def flatten_errors(errors, prefix: str = "") -> list[str]:
    """``{"channel": {"rate": ["Must be positive."]}}`` -> ``["channel.rate: Must be positive."]``."""
    lines = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            path = f"{prefix}.{key}" if prefix else str(key)
            lines.extend(flatten_errors(value, path))
    elif isinstance(errors, list):
        for index, value in enumerate(errors):
            if isinstance(value, dict | list):
                lines.extend(flatten_errors(value, f"{prefix}[{index}]"))
            else:
                lines.append(f"{prefix or 'config'}: {value}")
    else:
        lines.append(f"{prefix or 'config'}: {errors}")
    return lines


def merge_tables(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``override`` wins and nested tables merge key by key."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_tables(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: Path) -> dict:
    try:
        with Path(path).open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        # message carries "(at line L, column C)"
        raise ConfigError(f"{path}: malformed TOML", [str(exc)]) from exc


def validate_config(data: dict) -> ExperimentConfig:
    serializer = ExperimentConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError("invalid experiment config", flatten_errors(serializer.errors))
    try:
        return serializer.save()
    except serializers.ValidationError as exc:
        raise ConfigError("invalid experiment config", flatten_errors(exc.detail)) from exc


def load_config(path: Path | None, defaults: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Command defaults, then the config file, then explicit overrides."""
    data = dict(defaults)
    if path is not None:
        logger.info("Reading experiment config %s", path)
        data = merge_tables(data, read_config_file(path))
    if overrides:
        data = merge_tables(data, overrides)
    return validate_config(data)
