"""Discrete-event simulator of the upstream channel of a multi-wavelength
Ethernet PON: MPCP polling, dynamic bandwidth/wavelength allocation, and
federated-learning traffic over mixed service classes."""

__version__ = "0.1.0"
