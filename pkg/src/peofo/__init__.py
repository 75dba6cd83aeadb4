"""Online feedback optimization with persistently exciting perturbations.

Modules: ``qp`` (dense active-set QP solver), ``estimator`` (recursive
Jacobian estimation), ``controller`` (plain, Gaussian, pe and oracle OFO
steps), ``plant`` (gas-lift well model) and ``harness`` (scenarios,
Monte Carlo, traces, plots and the CLI backend).
"""
