import math
from pathlib import Path

from rest_framework import serializers

from scenarios.generation import SWEEP_FIELDS
from scenarios.serializers import ScenarioConfigSerializer
from .models import ExperimentRun, TrialRecord
from .pipeline import AMP_MODES, METHODS, UNCONVERGED_POLICIES


class PipelineConfigSerializer(serializers.Serializer):
    """
    Serializer for the optional detector section of an experiment file.
    Anything left out falls back to ``settings.BAGOD``.
    """
    admm_tolerance = serializers.FloatField(min_value=0.0, required=False)
    admm_max_iter = serializers.IntegerField(min_value=1, required=False)
    delay_model = serializers.ChoiceField(choices=['free', 'phase_ramp'], required=False)
    am_max_iter = serializers.IntegerField(min_value=1, required=False)
    spectrum_grid = serializers.IntegerField(min_value=16, required=False)
    peak_threshold = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    gap_threshold_deg = serializers.FloatField(min_value=0.0, required=False)
    angle_tol_deg = serializers.FloatField(min_value=0.0, required=False)
    corr_threshold = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    amp_mode = serializers.ChoiceField(choices=AMP_MODES, required=False)
    amp_detection = serializers.ChoiceField(choices=['top_k', 'threshold'], required=False)
    amp_max_iter = serializers.IntegerField(min_value=1, required=False)
    amp_damping = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    unconverged_policy = serializers.ChoiceField(choices=UNCONVERGED_POLICIES, required=False)
    check_feasibility = serializers.BooleanField(required=False)

    def to_options(self) -> dict:
        """Keyword arguments for ``PipelineOptions.from_settings``."""
        data = dict(self.validated_data)
        options = {
            'admm': {'tolerance': data.pop('admm_tolerance', None), 'max_iter': data.pop('admm_max_iter', None)},
            'am': {'delay_model': data.pop('delay_model', None), 'max_iter': data.pop('am_max_iter', None)},
            'amp': {'detection': data.pop('amp_detection', None), 'max_iter': data.pop('amp_max_iter', None),
                    'damping': data.pop('amp_damping', None)},
        }
        if 'gap_threshold_deg' in data:
            options['gap_threshold'] = math.radians(data.pop('gap_threshold_deg'))
        if 'angle_tol_deg' in data:
            options['angle_tol'] = math.radians(data.pop('angle_tol_deg'))
        options.update(data)
        return options


class ExperimentSpecSerializer(serializers.Serializer):
    """
    Serializer for an experiment file: one sweep over a fixed scenario.
    """
    name = serializers.CharField(max_length=200, default='experiment')
    sweep = serializers.ChoiceField(choices=sorted(SWEEP_FIELDS))
    values = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    scenario = ScenarioConfigSerializer()
    trials = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, default=0)
    methods = serializers.ListField(child=serializers.ChoiceField(choices=METHODS),
                                    allow_empty=False, default=list(METHODS))
    output = serializers.CharField(required=False, allow_null=True, default=None)
    threads = serializers.IntegerField(required=False)
    exclude_failures = serializers.BooleanField(default=False)
    pipeline = PipelineConfigSerializer(required=False)

    def validate_values(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Sweep values must be distinct.")
        return value

    def validate(self, data):
        if data['sweep'] != 'SNR' and any(v != int(v) for v in data['values']):
            raise serializers.ValidationError(f"Sweep over {data['sweep']} needs integer values.")
        if len(set(data['methods'])) != len(data['methods']):
            raise serializers.ValidationError("Methods must not repeat.")
        return data

    def to_spec(self):
        from django.conf import settings

        from .runner import ExperimentSpec

        data = self.validated_data
        scenario = ScenarioConfigSerializer(data=self.initial_data['scenario'])
        scenario.is_valid(raise_exception=True)
        pipeline = {}
        if 'pipeline' in self.initial_data:
            section = PipelineConfigSerializer(data=self.initial_data['pipeline'])
            section.is_valid(raise_exception=True)
            pipeline = section.to_options()
        values = tuple(v if data['sweep'] == 'SNR' else int(v) for v in data['values'])
        return ExperimentSpec(
            sweep=data['sweep'],
            values=values,
            scenario=scenario.to_params(),
            trials=data.get('trials', settings.BAGOD['TRIALS']),
            seed=data['seed'],
            methods=tuple(data['methods']),
            name=data['name'],
            output=None if data['output'] is None else Path(data['output']),
            threads=data.get('threads', settings.BAGOD['THREADS']),
            exclude_failures=data['exclude_failures'],
            pipeline=pipeline,
            config=dict(self.initial_data),
        )


class TrialRecordSerializer(serializers.ModelSerializer):
    """
    Serializer for the TrialRecord model
    """
    class Meta:
        model = TrialRecord
        fields = ['id', 'run', 'sweep_index', 'sweep_value', 'trial_index', 'seed', 'method',
                  'metrics', 'p_d', 'p_fa', 'failed', 'failure', 'diagnostics', 'wall_time']
        read_only_fields = fields


class ExperimentRunSerializer(serializers.ModelSerializer):
    """
    Serializer for the ExperimentRun model
    """
    failure_count = serializers.IntegerField(read_only=True)

    class Meta:
        model = ExperimentRun
        fields = ['id', 'name', 'sweep_variable', 'seed', 'trials', 'methods', 'status',
                  'output_path', 'wall_time', 'failure_count', 'created_at', 'completed_at']
        read_only_fields = fields
