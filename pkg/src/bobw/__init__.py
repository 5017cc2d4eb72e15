"""Best-of-both-worlds bandit reduction stack.

Library layout:

- ``simplex``      -- FTRL argmin over the probability simplex, Bregman
                      divergences, stability bounds, categorical sampling.
- ``environments`` -- loss models (adversarial / stochastic / corrupted,
                      linear, contextual) realised as deterministic paths.
- ``graphs``       -- directed feedback graphs: observability, independence
                      numbers, dominating sets, surrogate losses.
- ``design``       -- D-optimal (John-ellipsoid style) exploration designs.
- ``learners``     -- importance-weighting-stable base learners.
- ``corral``       -- two-arm wrapper variants around a candidate action.
- ``epochs``       -- outer epoch-doubling candidate reduction.
- ``harness``      -- experiment configs, runner, CSV output, slope fits.
- ``checks``       -- invariant check suites (also behind the CLI).
- ``service``      -- FastAPI wrapper around the harness.
- ``cli``          -- thin command-line client.
"""

__version__ = "0.1.0"
