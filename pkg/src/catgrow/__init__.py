"""Cat-state breeding on heterodyne samples with Fock-basis oracles."""

__version__ = "0.1.0"
