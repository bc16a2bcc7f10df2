"""Space/time analysis and execution for conjunctive queries with access patterns."""

__version__ = "0.1.0"
