"""Simulation configuration."""

TOLERANCE = 1e-8


class SimulationConfig:
    """Validated bundle of run parameters."""

    def __init__(self, stop_time, levels, tolerance=TOLERANCE):
        self.stop_time = stop_time
        self.levels = levels
        self.tolerance = tolerance

    def validate(self):
        """Raise ValueError when any parameter is out of range."""
        if self.stop_time <= 0:
            raise ValueError("stop_time must be positive")
        if self.levels < 1:
            raise ValueError("need at least one level")


def default_config():
    """Configuration used by the examples."""
    return SimulationConfig(stop_time=1.0, levels=100)
