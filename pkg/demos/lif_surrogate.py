"""Characterize the LIF neuron, train surrogates, and replay unseen runs through the engine.

Run from the repository root:  python3 demos/lif_surrogate.py
Takes a couple of minutes on one core.
"""

import numpy as np

from evsurrogate import circuits, dataset, engine, oracle
from evsurrogate.models import PREDICTORS, evaluate, select_bundle, train_all

spec = circuits.lif_neuron_spec()

# labeled events from 150 random testbenches of 100 clock steps each
events = dataset.characterize_events(spec, n_runs=150, n_steps=100, alpha=0.8, seed=1)
ds = dataset.build_dataset(events, seed=1, spec=spec)
print(f"{len(events)} events from 150 runs")

cands = train_all(spec, ds.view("train"), ds.view("val"), ["linear", "gbt"], seed=0)
bundle = select_bundle(cands, spec)
test = ds.view("test")
for p in PREDICTORS:
    for m in cands[p]:
        r = evaluate(m, test, spec)
        mark = "*" if bundle[p].family == m.family else " "
        print(f"{mark} {p:6s} {m.family:7s} n={r['n']:5d}  mse={r['mse']:.4g}  mape={r['mape']:.2f}%")

# 20 runs the models never saw, simulated by the oracle and by the engine
runs = dataset.run_characterization(spec, n_runs=20, n_steps=100, alpha=0.8, seed=2)
P, plan, n_steps = engine.characterization_schedule(spec, [r.testbench for r in runs])
res = engine.run_sequence(engine.EngineState.create(spec, P), plan, bundle, end_step=n_steps)
truth = np.array([oracle.trapezoid_energy(r.trace.power[None, :], r.trace.dt)[0] for r in runs])
rel = np.abs(res.energy_per_circuit - truth) / truth
print(f"per-run energy error over 20 unseen runs: median {100 * np.median(rel):.2f}%, "
      f"max {100 * rel.max():.2f}%")
print(f"total energy: oracle {truth.sum():.4g} J, surrogate {res.total_energy:.4g} J")
