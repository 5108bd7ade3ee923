"""Default physical constants (km, s). All overridable through config."""

MU_MOON = 4902.800066        # km^3/s^2
MU_EARTH = 398600.4418       # km^3/s^2
MU_SUN = 1.32712440018e11    # km^3/s^2

AU_KM = 149.6e6              # km
EARTH_MOON_DIST_KM = 384400.0

# Solar pressure at 1 AU, N/m^2 (= kg/(m s^2))
P_SUN_N_M2 = 4.56e-6

SECONDS_PER_DAY = 86400.0

# Default canonical distance unit: the Earth-Moon distance, km.  The
# separation-tightening rate (1e5 per DU) then saturates gradually across a
# multi-revolution horizon, which is what keeps the standard +-7.5 km
# initial formation offsets feasible at the start of every horizon.
DEFAULT_DU_KM = 384400.0
