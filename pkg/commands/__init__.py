"""
Command groups for hazardset.
"""

from commands.pipeline import pipeline_commands
from commands.synthetic import simulate_synthetic_command

all_commands = pipeline_commands + [simulate_synthetic_command]

__all__ = ['all_commands']
