"""
URL configuration for GhostLab project.

Only the admin is served; it browses the run ledger recorded by the
management commands.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
