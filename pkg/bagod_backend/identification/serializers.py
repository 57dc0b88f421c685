from rest_framework import serializers

from scenarios.types import Mobility


class RegistryEntrySerializer(serializers.Serializer):
    """
    Serializer for one registered user of a registry file
    """
    user_id = serializers.IntegerField(min_value=0)
    type = serializers.ChoiceField(choices=Mobility.choices)
    los_angle_deg = serializers.FloatField()
    sector = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    preamble_index = serializers.IntegerField(min_value=0, required=False, allow_null=True, default=None)

    def validate_los_angle_deg(self, value):
        if not 0.0 < value < 180.0:
            raise serializers.ValidationError("LoS angle must lie strictly between 0 and 180 degrees.")
        return value

    def validate(self, data):
        if data['type'] == Mobility.MOBILE and data.get('preamble_index') is None:
            raise serializers.ValidationError("Mobile users need a preamble index.")
        return data
