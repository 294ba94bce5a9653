"""Desk-scale simulator and control stack for semi-autonomous
turntable-ladder firefighting: UAV heat-source localization inside an
obstacle-free flight funnel, inverse-ballistic water-jet aiming, and the
ground-control protocol tying them together."""

__version__ = "0.1.0"
