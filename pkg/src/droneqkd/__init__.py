"""Drone-to-ground free-space CV-QKD link simulator.

Subsystems: polarization encoding (stokes), the parametric free-space
channel and heterodyne receiver (channel), frame synchronization (sync),
the Alice/Bob protocol with finite-size key accounting (session,
keyrate, privacy, messages), the pointing/acquisition/tracking loops
(pat), and scenario-driven runs (scenario, runner, cli).
"""

__version__ = "0.1.0"
