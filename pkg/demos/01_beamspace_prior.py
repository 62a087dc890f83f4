"""Where do the best beams land?

Generates a training split from the synthetic roadside scenario and prints
the beamspace prior: how often each DFT beam is the strongest one. Mass
piles up along two strips, one per lane, so a good sensing filter should
spend its energy there.
"""

import numpy as np

from ccsbeam import ScenarioConfig, generate_dataset
from ccsbeam.channelgen import beamspace_prior, mass_concentration, prior_entropy_bits

train, _ = generate_dataset(ScenarioConfig(seed=0), 5000, 1)
prior = beamspace_prior(train)

print(f"LoS fraction: {np.mean(train.los):.2f}")
print(f"bins holding 80% of the mass: {100 * mass_concentration(prior, 0.8):.1f}%")
print(f"bins holding 95% of the mass: {100 * mass_concentration(prior, 0.95):.1f}%")
print(f"entropy: {prior_entropy_bits(prior):.2f} bits (uniform would be 8)")

# coarse text rendering on a square-root scale, rows = first beam index
shades = " .:-=+*#%@"
scaled = np.sqrt(prior / prior.max())
for row in scaled:
    print("".join(shades[min(int(v * len(shades)), len(shades) - 1)] * 2 for v in row))
