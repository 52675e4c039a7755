from django.apps import AppConfig


class PackBalanceConfig(AppConfig):
    name = 'pack_balance'
    verbose_name = 'Packing and Load Balancing'
