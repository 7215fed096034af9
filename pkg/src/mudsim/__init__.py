"""Link-level simulator for synchronous DS-CDMA multiuser receivers in Rayleigh fading."""

__version__ = "0.1.0"
