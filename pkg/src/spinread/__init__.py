"""spinread: simulator for single-electron spin readout in a surface Paul trap.

The readout protocol has four stages: cooling of the axial mode, a resonant
spin-dependent magnetic-gradient drive, parametric amplification of the
motion, and phase-sensitive image-current detection.  Modules follow the
stages: ``trap`` (electrode potentials), ``wires`` (drive-circuit fields),
``dynamics`` (motional integration), ``detection`` (signal/noise model),
``pipeline`` (Monte Carlo fidelity), ``cli`` (command-line front end).
"""

__version__ = "0.1.0"
