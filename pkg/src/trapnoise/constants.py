"""Physical constants used throughout the package (CODATA 2018).

All values are SI.  Keeping them in one table avoids the classic failure
mode of slightly different constants in different modules.
"""

BOLTZMANN = 1.380649e-23          # J/K
HBAR = 1.054571817e-34            # J s
ELEMENTARY_CHARGE = 1.602176634e-19   # C
ATOMIC_MASS = 1.66053906660e-27   # kg
ELECTRON_MASS_U = 5.48579909065e-4    # electron mass in u

# Sr-88 neutral atomic mass in u (AME2020); the singly charged ion is this
# minus one electron mass.
SR88_ATOMIC_MASS_U = 87.9056125
SR88_ION_MASS = (SR88_ATOMIC_MASS_U - ELECTRON_MASS_U) * ATOMIC_MASS
