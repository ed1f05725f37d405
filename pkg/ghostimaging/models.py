from django.db import models


class AnalysisRun(models.Model):
    VERB_CHOICES = [
        ('simulate', 'Simulate'),
        ('register', 'Register'),
        ('reconstruct', 'Reconstruct'),
        ('visibility', 'Visibility'),
        ('stats', 'Statistics'),
        ('render', 'Render'),
        ('study', 'Gap study'),
    ]

    verb = models.CharField(max_length=20, choices=VERB_CHOICES)
    # decimal text, seeds span the full unsigned 64-bit range
    seed = models.CharField(max_length=20, blank=True, null=True)
    config_path = models.CharField(max_length=500, blank=True)
    output_dir = models.CharField(max_length=500)
    n_frames = models.PositiveIntegerField(blank=True, null=True)
    summary = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return f"{self.get_verb_display()} -> {self.output_dir} ({self.created_at:%Y-%m-%d %H:%M})"

    class Meta:
        ordering = ['-created_at']
        verbose_name = "Analysis Run"
        verbose_name_plural = "Analysis Runs"


class VisibilityMeasurement(models.Model):
    ORDER_CHOICES = [
        (2, 'Second order'),
        (3, 'Third order'),
    ]

    run = models.ForeignKey(AnalysisRun, on_delete=models.CASCADE, related_name='measurements')
    order = models.PositiveSmallIntegerField(choices=ORDER_CHOICES)
    reference_arm = models.PositiveSmallIntegerField(blank=True, null=True)
    frame_start = models.PositiveIntegerField(blank=True, null=True)
    frame_stop = models.PositiveIntegerField(blank=True, null=True)
    v = models.FloatField()
    v_stderr = models.FloatField(blank=True, null=True)
    cj_back = models.FloatField(blank=True, null=True)
    cj_obj = models.FloatField(blank=True, null=True)
    created_at = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return f"V{self.order} = {self.v:.4f} ({self.run.get_verb_display()})"

    class Meta:
        ordering = ['-created_at']
        verbose_name = "Visibility Measurement"
        verbose_name_plural = "Visibility Measurements"
