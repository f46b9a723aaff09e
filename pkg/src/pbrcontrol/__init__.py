"""Periodic optimal control of light/dark-forced photobioreactors."""
