"""
GRAPE Pulse Engine

Optimal-control toolkit that designs piecewise-constant control pulses for
spin systems in Liouville space, using exact propagator derivatives and
quasi-Newton optimizers.
"""

__version__ = "0.1.0"
__author__ = "Spin Dynamics Team"
