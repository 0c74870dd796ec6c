"""Desk-scale multistream TDNN lyrics transcription stack."""

__version__ = "0.1.0"
