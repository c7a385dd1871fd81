"""Physical constants. Lengths in km, times in s."""

EARTH_RADIUS_KM = 6371.0
EARTH_MU_KM3_S2 = 398600.4418
EARTH_ROTATION_RAD_S = 7.2921159e-5
SPEED_OF_LIGHT_KM_S = 299792.458
