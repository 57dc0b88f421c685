from django.db import models


class ExperimentRun(models.Model):
    """
    ExperimentRun model for storing one sweep, its .dat table and metadata
    """
    STATUS = (
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    )

    name = models.CharField(max_length=200)
    sweep_variable = models.CharField(max_length=10)
    spec = models.JSONField(default=dict)
    seed = models.IntegerField(default=0)
    trials = models.PositiveIntegerField(default=1)
    methods = models.JSONField(default=list)
    status = models.CharField(max_length=20, choices=STATUS, default='running')
    dat_text = models.TextField(blank=True)
    metadata = models.JSONField(default=dict)
    output_path = models.CharField(max_length=500, blank=True)
    wall_time = models.FloatField(default=0.0)
    created_at = models.DateTimeField(auto_now_add=True)
    completed_at = models.DateTimeField(blank=True, null=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.name} ({self.sweep_variable}, seed {self.seed})"

    @property
    def failure_count(self):
        """Number of failed method runs across all trials"""
        return self.trial_records.filter(failed=True).count()


class TrialRecord(models.Model):
    """
    TrialRecord model for storing one method's result on one trial
    """
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='trial_records')
    sweep_index = models.PositiveIntegerField()
    sweep_value = models.FloatField()
    trial_index = models.PositiveIntegerField()
    seed = models.JSONField(default=list)
    method = models.CharField(max_length=20)
    metrics = models.JSONField(default=dict)
    p_d = models.FloatField(blank=True, null=True)
    p_fa = models.FloatField(blank=True, null=True)
    failed = models.BooleanField(default=False)
    failure = models.TextField(blank=True)
    diagnostics = models.JSONField(default=dict)
    wall_time = models.FloatField(default=0.0)

    class Meta:
        ordering = ['sweep_index', 'trial_index', 'method']
        unique_together = ('run', 'sweep_index', 'trial_index', 'method')

    def __str__(self):
        return f"{self.method} trial {self.trial_index} at {self.sweep_value:g} in run {self.run_id}"
