"""Shared store for acceptance results, read by the terminal-summary hook."""

LINES: dict[int, str] = {}
REPORTS: dict[int, str] = {}
# (table, entitlement) pairs whose shares were computed by some criterion.
SEEN: dict = {}
