from django.contrib import admin

from .models import AnalysisRun, VisibilityMeasurement


class VisibilityMeasurementInline(admin.TabularInline):
    model = VisibilityMeasurement
    extra = 0
    readonly_fields = ['order', 'reference_arm', 'frame_start', 'frame_stop', 'v', 'v_stderr',
                       'cj_back', 'cj_obj', 'created_at']


@admin.register(AnalysisRun)
class AnalysisRunAdmin(admin.ModelAdmin):
    list_display = ['verb', 'seed', 'n_frames', 'output_dir', 'created_at']
    list_filter = ['verb', 'created_at']
    search_fields = ['config_path', 'output_dir', 'summary']
    readonly_fields = ['created_at']
    inlines = [VisibilityMeasurementInline]
    list_per_page = 25

    fieldsets = (
        ('Run', {
            'fields': ('verb', 'seed', 'n_frames')
        }),
        ('Files', {
            'fields': ('config_path', 'output_dir')
        }),
        ('Result', {
            'fields': ('summary',)
        }),
        ('Timestamps', {
            'fields': ('created_at',),
            'classes': ('collapse',)
        }),
    )


@admin.register(VisibilityMeasurement)
class VisibilityMeasurementAdmin(admin.ModelAdmin):
    list_display = ['run', 'order', 'reference_arm', 'v', 'v_stderr', 'frame_window', 'created_at']
    list_filter = ['order', 'reference_arm', 'created_at']
    readonly_fields = ['created_at']

    fieldsets = (
        ('Measurement', {
            'fields': ('run', 'order', 'reference_arm', 'v', 'v_stderr')
        }),
        ('Region means', {
            'fields': ('cj_back', 'cj_obj')
        }),
        ('Frames', {
            'fields': ('frame_start', 'frame_stop')
        }),
        ('Timestamp', {
            'fields': ('created_at',),
            'classes': ('collapse',)
        }),
    )

    def frame_window(self, obj):
        if obj.frame_start is None:
            return 'All frames'
        return f"{obj.frame_start}:{obj.frame_stop}"
    frame_window.short_description = 'Frames'
