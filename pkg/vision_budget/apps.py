from django.apps import AppConfig


class VisionBudgetConfig(AppConfig):
    name = 'vision_budget'
    verbose_name = 'Vision Token Budgets'
