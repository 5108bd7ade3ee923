"""Figure generation for formation-guidance campaign outputs.

Consumes only the campaign directory contract (ranges.csv, controls.csv,
reltraj.csv, summary.json); never imports the simulation library.
"""

__version__ = "0.1.0"

SUPPORTED_SCHEMA = 1


class SchemaError(RuntimeError):
    """Campaign directory does not match the supported output schema."""
