"""tempobeat: how representative is any hour or day of an hourly activity series."""

__version__ = "0.1.0"
