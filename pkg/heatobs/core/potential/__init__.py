'''
heatobs Potential Package

Potential families V(x, t) as a pydantic discriminated union on `kind`, and
the norm bundle (sup, gradient, time derivative, negative part, combined norm)
that every bound formula consumes.
'''
