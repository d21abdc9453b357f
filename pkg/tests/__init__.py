# Tests package for the SPDE density lab
