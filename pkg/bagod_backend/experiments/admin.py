from django.contrib import admin
from .models import ExperimentRun, TrialRecord

@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('name', 'sweep_variable', 'seed', 'trials', 'status', 'wall_time', 'created_at')
    list_filter = ('sweep_variable', 'status', 'created_at')
    search_fields = ('name',)
    readonly_fields = ('dat_text', 'metadata', 'spec')
    date_hierarchy = 'created_at'

@admin.register(TrialRecord)
class TrialRecordAdmin(admin.ModelAdmin):
    list_display = ('run', 'method', 'sweep_value', 'trial_index', 'p_d', 'p_fa', 'failed')
    list_filter = ('method', 'failed', 'run')
    search_fields = ('failure',)
