'''
heatobs CLI Package

JSON experiment configuration, the task library behind each subcommand,
the sweep runner and exponent fits over result tables.
'''
