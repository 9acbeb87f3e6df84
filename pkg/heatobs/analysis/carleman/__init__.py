'''
heatobs Carleman Package

The auxiliary function xi, the singular weights beta and eta, the parameter
threshold tau0 and a two-sided evaluator of the Carleman inequality with a
minimal-tau search over a corpus of test fields.
'''
