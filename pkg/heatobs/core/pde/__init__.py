'''
heatobs PDE Package

Forward and adjoint time stepping of the heat equation with a potential,
observation traces and the energy diagnostics of the continuous problem.
'''
