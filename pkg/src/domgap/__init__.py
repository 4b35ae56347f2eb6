"""Domain-gap elimination for WiFi CSI gesture recognition via gradient sign maps."""
__version__ = "0.1.0"
