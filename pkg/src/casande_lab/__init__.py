"""Sequential evidence acquisition for differential diagnosis on synthetic knowledge bases."""

__version__ = "0.1.0"
