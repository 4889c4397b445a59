"""
ctxaware - context-aware notes and presence awareness

Phones detect nearby devices by periodic radio scans, keep a presence session per
device, and surface text or audio notes when person, place and time triggers hold.
A store-and-route broker relays shared notes and block notices between devices.
"""

__version__ = "0.1.0"
__author__ = "ctxaware contributors"

from ctxaware.device import DeviceApp

__all__ = ["DeviceApp", "__version__"]
