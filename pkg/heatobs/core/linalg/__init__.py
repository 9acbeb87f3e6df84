'''
heatobs Linear Algebra Package

Matrix-free Krylov and eigenvalue routines shared by the control and
observability analyses.
'''
