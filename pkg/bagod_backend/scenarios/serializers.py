import math

from rest_framework import serializers

from .generation import ScenarioParams
from .types import Mobility, NoiseKind


class ScenarioConfigSerializer(serializers.Serializer):
    """
    Serializer for a scenario configuration file.

    Angles are in degrees and ``omega`` is 1-based here; ``to_params``
    converts to radians and 0-based indices.
    """
    N = serializers.IntegerField(min_value=2)
    M = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    omega = serializers.ListField(child=serializers.IntegerField(min_value=1),
                                  required=False, allow_null=True, default=None)
    T = serializers.IntegerField(min_value=1)
    K_S = serializers.IntegerField(min_value=0)
    K_M = serializers.IntegerField(min_value=0)
    K_aS = serializers.IntegerField(min_value=0)
    K_aM = serializers.IntegerField(min_value=0)
    L_max = serializers.IntegerField(min_value=1, default=3)
    snr_db = serializers.FloatField(required=False, allow_null=True, default=None)
    tau_max = serializers.FloatField(min_value=0.0, default=0.0)
    zeta = serializers.FloatField(min_value=0.0, default=0.0)
    spread_width = serializers.FloatField(default=15.0)
    seed = serializers.IntegerField(min_value=0, default=0)

    spacing_ratio = serializers.FloatField(default=0.5)
    los_boost = serializers.FloatField(min_value=0.0, default=2.0)
    min_user_gap = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    guaranteed_recovery = serializers.BooleanField(default=False)
    separation_factor = serializers.FloatField(min_value=0.0, default=1.0)
    integer_delays = serializers.BooleanField(default=True)
    gain_error_users = serializers.ChoiceField(choices=[Mobility.MOBILE.value, 'all'], default=Mobility.MOBILE.value)
    mobile_drift_deg = serializers.FloatField(min_value=0.0, default=0.5)
    angle_margin_deg = serializers.FloatField(min_value=0.0, max_value=89.0, default=10.0)
    registry_clearance_deg = serializers.FloatField(min_value=0.0, default=2.0)
    sectors = serializers.IntegerField(min_value=1, default=4)
    n_preambles = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    noise = serializers.ChoiceField(choices=NoiseKind.choices, default=NoiseKind.GAUSSIAN.value)
    noise_bound = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    eta_multiplier = serializers.FloatField(min_value=1.0, default=1.0)
    strict = serializers.BooleanField(default=False)

    def validate_spread_width(self, value):
        if not 0.0 < value < 180.0:
            raise serializers.ValidationError("Spread width must lie strictly between 0 and 180 degrees.")
        return value

    def validate(self, data):
        n = data['N']
        if data['K_aS'] > data['K_S']:
            raise serializers.ValidationError("K_aS cannot exceed K_S.")
        if data['K_aM'] > data['K_M']:
            raise serializers.ValidationError("K_aM cannot exceed K_M.")
        if data['L_max'] > n:
            raise serializers.ValidationError("L_max cannot exceed N.")
        if data['tau_max'] >= data['T']:
            raise serializers.ValidationError("tau_max must be smaller than T.")
        if data['M'] is not None and data['M'] > n:
            raise serializers.ValidationError("M cannot exceed N.")
        omega = data['omega']
        if omega is not None:
            if not omega or any(i > n for i in omega) or len(set(omega)) != len(omega):
                raise serializers.ValidationError("omega must hold distinct antenna indices in 1..N.")
            if data['M'] is not None and data['M'] != len(omega):
                raise serializers.ValidationError("M must equal the size of omega.")
        if data['n_preambles'] is not None and data['n_preambles'] > data['T']:
            raise serializers.ValidationError("n_preambles cannot exceed T.")
        return data

    def to_params(self) -> ScenarioParams:
        data = self.validated_data
        omega = data['omega']
        return ScenarioParams(
            n_antennas=data['N'],
            t_len=data['T'],
            k_s=data['K_S'],
            k_m=data['K_M'],
            k_a_s=data['K_aS'],
            k_a_m=data['K_aM'],
            l_max=data['L_max'],
            m=data['M'],
            omega=None if omega is None else tuple(sorted(i - 1 for i in omega)),
            snr_db=data['snr_db'],
            tau_max=data['tau_max'],
            zeta=data['zeta'],
            spread_width=math.radians(data['spread_width']),
            spacing_ratio=data['spacing_ratio'],
            los_boost=data['los_boost'],
            min_user_gap=None if data['min_user_gap'] is None else math.radians(data['min_user_gap']),
            guaranteed_recovery=data['guaranteed_recovery'],
            separation_factor=data['separation_factor'],
            integer_delays=data['integer_delays'],
            gain_error_users=data['gain_error_users'],
            mobile_drift_deg=data['mobile_drift_deg'],
            angle_margin_deg=data['angle_margin_deg'],
            registry_clearance_deg=data['registry_clearance_deg'],
            n_sectors=data['sectors'],
            n_preambles=data['n_preambles'],
            noise=data['noise'],
            noise_bound=data['noise_bound'],
            eta_multiplier=data['eta_multiplier'],
            strict=data['strict'],
        )
