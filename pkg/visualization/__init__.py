from .sweep_plotter import SweepPlotter

__all__ = ["SweepPlotter"]
