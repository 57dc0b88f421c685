from django.urls import path, include
from rest_framework.routers import DefaultRouter
from experiments.views import ExperimentRunViewSet, TrialRecordViewSet

# Create a router and register our viewsets with it
router = DefaultRouter()
router.register(r'runs', ExperimentRunViewSet)
router.register(r'trials', TrialRecordViewSet)

urlpatterns = [
    path('', include(router.urls)),
    path('auth/', include('rest_framework.urls')),
]
