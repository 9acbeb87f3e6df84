'''
heatobs Spectral Package

Dirichlet eigenbasis of the Hill operator, worst-case window ratios over a
subinterval, the shift and gauge reductions for sign-changing potentials,
and the multiplier and extension constructions on (-1, 1).
'''
