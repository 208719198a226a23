"""Battery side-channel attacks on EV consumption traces, and their countermeasure."""

__version__ = "0.3.0"
