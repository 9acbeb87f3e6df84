'''
heatobs Observability Package

Measured observability constants over omega x E by Gramian pencil power
iteration, the predicted bound formulas, and the interpolation and weight
diagnostics used along the proof route.
'''
