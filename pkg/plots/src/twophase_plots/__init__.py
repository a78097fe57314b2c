"""Batch figures for two-phase flow diagnostics CSVs and convergence reports."""

from .figures import FigureSpec, FigureError, render

__all__ = ["FigureSpec", "FigureError", "render"]
