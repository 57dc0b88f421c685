from django.http import HttpResponse
from django_filters.rest_framework import DjangoFilterBackend
from rest_framework import filters, permissions, viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from .models import ExperimentRun, TrialRecord
from .serializers import ExperimentRunSerializer, TrialRecordSerializer

class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """
    ViewSet for ExperimentRun model
    """
    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer
    permission_classes = [permissions.IsAuthenticatedOrReadOnly]
    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_fields = ['sweep_variable', 'status', 'seed']
    search_fields = ['name']
    ordering_fields = ['created_at', 'name', 'wall_time']

    @action(detail=True, methods=['get'])
    def dat(self, request, pk=None):
        """
        Get the .dat table of a run as plain text
        """
        run = self.get_object()
        if not run.dat_text:
            return Response({'detail': 'This run has no table.'}, status=404)
        return HttpResponse(run.dat_text, content_type='text/plain')

    @action(detail=True, methods=['get'])
    def metadata(self, request, pk=None):
        """
        Get the metadata sidecar of a run
        """
        return Response(self.get_object().metadata)

class TrialRecordViewSet(viewsets.ReadOnlyModelViewSet):
    """
    ViewSet for TrialRecord model
    """
    queryset = TrialRecord.objects.select_related('run')
    serializer_class = TrialRecordSerializer
    permission_classes = [permissions.IsAuthenticatedOrReadOnly]
    filter_backends = [DjangoFilterBackend, filters.OrderingFilter]
    filterset_fields = ['run', 'method', 'failed', 'sweep_value']
    ordering_fields = ['sweep_value', 'trial_index', 'p_d', 'p_fa']
