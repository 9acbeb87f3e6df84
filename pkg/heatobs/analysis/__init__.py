'''
heatobs Analysis Package

Carleman weights, observability constants, control synthesis and the
spectral workbench, all built on the discretization layer in heatobs.core.
'''
