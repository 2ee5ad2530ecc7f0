"""Physical constants (CODATA 2018), SI units.

Single source of truth for every module; do not redefine these locally.
"""

ELECTRON_MASS = 9.1093837015e-31  # kg
ELEMENTARY_CHARGE = 1.602176634e-19  # C
BOHR_MAGNETON = 9.2740100783e-24  # J/T
BOLTZMANN = 1.380649e-23  # J/K
MU_0 = 1.25663706212e-6  # T m / A
EPSILON_0 = 8.8541878128e-12  # F / m
HBAR = 1.054571817e-34  # J s

# Conductivity of gold at 4 K, used for the wire voltage-drop model.
GOLD_CONDUCTIVITY_4K = 4.5e9  # S / m
