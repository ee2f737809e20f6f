"""Control-chart triggering of secondary tasks in EMA studies with incomplete adherence."""

__version__ = "1.0.0"
