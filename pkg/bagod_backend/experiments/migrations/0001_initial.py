# Generated by Django 5.0 on 2026-10-18 10:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=200)),
                ('sweep_variable', models.CharField(max_length=10)),
                ('spec', models.JSONField(default=dict)),
                ('seed', models.IntegerField(default=0)),
                ('trials', models.PositiveIntegerField(default=1)),
                ('methods', models.JSONField(default=list)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20)),
                ('dat_text', models.TextField(blank=True)),
                ('metadata', models.JSONField(default=dict)),
                ('output_path', models.CharField(blank=True, max_length=500)),
                ('wall_time', models.FloatField(default=0.0)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='TrialRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('sweep_index', models.PositiveIntegerField()),
                ('sweep_value', models.FloatField()),
                ('trial_index', models.PositiveIntegerField()),
                ('seed', models.JSONField(default=list)),
                ('method', models.CharField(max_length=20)),
                ('metrics', models.JSONField(default=dict)),
                ('p_d', models.FloatField(blank=True, null=True)),
                ('p_fa', models.FloatField(blank=True, null=True)),
                ('failed', models.BooleanField(default=False)),
                ('failure', models.TextField(blank=True)),
                ('diagnostics', models.JSONField(default=dict)),
                ('wall_time', models.FloatField(default=0.0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='trial_records', to='experiments.experimentrun')),
            ],
            options={
                'ordering': ['sweep_index', 'trial_index', 'method'],
                'unique_together': {('run', 'sweep_index', 'trial_index', 'method')},
            },
        ),
    ]
