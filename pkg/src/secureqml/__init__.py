"""Encryption, obfuscation and encrypted-data training for amplitude-encoded quantum classifiers."""

__version__ = "0.1.0"
