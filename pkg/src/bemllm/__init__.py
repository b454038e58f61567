"""LLM-assisted EnergyPlus input generation, repair, documentation QA and plotting."""

__version__ = "0.1.0"
