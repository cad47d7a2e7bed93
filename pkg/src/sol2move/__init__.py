"""Solidity-to-Move translation via concept retrieval, LLM planning and toolchain feedback."""

__version__ = "0.1.0"
