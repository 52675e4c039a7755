from django.apps import AppConfig


class ModelMergeConfig(AppConfig):
    name = 'model_merge'
    verbose_name = 'Checkpoint Merging'
