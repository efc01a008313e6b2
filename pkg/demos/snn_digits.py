"""Classify 8x8 digits with a spiking network whose neurons are LIF surrogates.

Run from the repository root:  python3 demos/snn_digits.py
Trains a small LIF bundle first, then compares the surrogate network against the
transient oracle on 50 test images.
"""

from evsurrogate import circuits, dataset, evalkit
from evsurrogate.models import select_bundle, train_all
from evsurrogate.netsim import snn
from evsurrogate.netsim.digits import load_digits_split

spec = circuits.lif_neuron_spec()
ds = dataset.build_dataset(dataset.characterize_events(spec, 200, 100, 0.8, seed=3), 3, spec)
bundle = select_bundle(train_all(spec, ds.view("train"), ds.view("val"), ["gbt"], seed=0), spec)

Xtr, ytr, Xte, yte = load_digits_split(n_test=300, seed=0)
X, y = Xte[:50], yte[:50]
net = snn.train_snn(spec, Xtr, ytr, seed=0)
spikes = snn.encode_images(net, X, seed=1)

ref = snn.oracle_snn(net, spikes)
sur = snn.run_snn(net, spikes, bundle)
s = evalkit.summarize_workload(y, ref.classes, sur.classes, ref.energy, sur.energy)
print(f"accuracy: oracle {s.oracle_accuracy:.3f}, surrogate {s.surrogate_accuracy:.3f} "
      f"(class agreement {s.class_agreement:.3f})")
print(f"energy per inference: oracle {s.oracle_energy_per_inference:.4g} J, "
      f"surrogate {s.surrogate_energy_per_inference:.4g} J ({100 * s.energy_error:.2f}% error)")
