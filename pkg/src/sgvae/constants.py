# CODATA 2018 values, SI units.
HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
M_RB87 = 86.909180527 * ATOMIC_MASS_UNIT  # kg

UM = 1e-6  # metres per micrometre
