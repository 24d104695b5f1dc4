"""Physical constants.

MU0 is the classic 4*pi*1e-7 value and EPS0 is derived from it so that
1/sqrt(MU0*EPS0) equals C0 exactly; the discrete dispersion checks rely on
that identity.
"""

import math

C0 = 299792458.0
MU0 = 4.0e-7 * math.pi
EPS0 = 1.0 / (MU0 * C0 * C0)
ETA0 = math.sqrt(MU0 / EPS0)
