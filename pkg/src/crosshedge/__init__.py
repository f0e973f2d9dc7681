"""Indifference pricing and cross hedging for derivatives on an external risk process."""
