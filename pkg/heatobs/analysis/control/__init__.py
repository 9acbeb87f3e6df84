'''
heatobs Control Package

Penalized HUM null controls, their cost against the predicted bound, and
the regular-control construction with smooth cutoffs and a discrete Hölder
norm estimator.
'''
