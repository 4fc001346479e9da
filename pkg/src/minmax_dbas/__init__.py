"""Barrier-state embedded min-max DDP for robust, safe trajectory optimization."""
