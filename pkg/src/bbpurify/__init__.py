"""Black-box backdoor trigger purification toolkit."""

__version__ = "0.1.0"
