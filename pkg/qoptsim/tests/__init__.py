# Tests package for qoptsim
