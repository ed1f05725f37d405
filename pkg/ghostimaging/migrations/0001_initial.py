# Generated by Django 5.2.4 on 2026-10-18 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='AnalysisRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('verb', models.CharField(choices=[('simulate', 'Simulate'), ('register', 'Register'), ('reconstruct', 'Reconstruct'), ('visibility', 'Visibility'), ('stats', 'Statistics'), ('render', 'Render'), ('study', 'Gap study')], max_length=20)),
                ('seed', models.CharField(blank=True, max_length=20, null=True)),
                ('config_path', models.CharField(blank=True, max_length=500)),
                ('output_dir', models.CharField(max_length=500)),
                ('n_frames', models.PositiveIntegerField(blank=True, null=True)),
                ('summary', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Analysis Run',
                'verbose_name_plural': 'Analysis Runs',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='VisibilityMeasurement',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('order', models.PositiveSmallIntegerField(choices=[(2, 'Second order'), (3, 'Third order')])),
                ('reference_arm', models.PositiveSmallIntegerField(blank=True, null=True)),
                ('frame_start', models.PositiveIntegerField(blank=True, null=True)),
                ('frame_stop', models.PositiveIntegerField(blank=True, null=True)),
                ('v', models.FloatField()),
                ('v_stderr', models.FloatField(blank=True, null=True)),
                ('cj_back', models.FloatField(blank=True, null=True)),
                ('cj_obj', models.FloatField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='measurements', to='ghostimaging.analysisrun')),
            ],
            options={
                'verbose_name': 'Visibility Measurement',
                'verbose_name_plural': 'Visibility Measurements',
                'ordering': ['-created_at'],
            },
        ),
    ]
