from scipy import constants as _c

HBAR = _c.hbar
E_CHARGE = _c.e
EPS0 = _c.epsilon_0
AMU = _c.atomic_mass
TWO_PI = 2.0 * _c.pi

# 138Ba atomic mass (AME2020), electron mass subtracted for the singly charged ion
BA138_MASS = 137.905247 * AMU - _c.m_e
