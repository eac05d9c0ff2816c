"""Training a chain tagger: accelerated smoothing with SVRG against plain SGD.

We draw a synthetic tagging task from a random ground-truth chain model, hash window
features, and train the structural SVM objective with both methods. Progress is measured
in oracle calls (one per example loss), the cost unit for structured prediction.

Run: python demos/02_train_tagger.py
"""

import numpy as np

from casimir.loss import Objective
from casimir.optim import SvrgConfig, casimir_run, make_schedule, sgd_run
from casimir.smoothing import SmoothingConfig
from casimir.tasks import TaggedDataset, evaluate, featurize, synth_chain_dataset

# %% Data: 150 training and 50 held-out sentences of 10 tokens with 5 tags.
ds = synth_chain_dataset(seed=0, n=200, p=10, num_tags=5, temperature=1e-3)
train = TaggedDataset(ds.sentences[:150], ds.label_alphabet)
test = TaggedDataset(ds.sentences[150:], ds.label_alphabet)
model = featurize(train, window=2, hash_bits=14)
examples = model.encode(train)
n = len(examples)
print(f"{n} training sentences, {model.d} parameters")

# %% Objective: lambda = 1/n, top-5 l2 smoothing at mu = 0.2 for the smooth method.
mu = 0.2
obj = Objective(model, examples, lam=1.0 / n, smoothing=SmoothingConfig("topk_l2", mu, 5))

# %% Casimir: constant smoothing, kappa set from the step size, SVRG inner loop of n steps.
L = 25.0
sched = make_schedule("sc-const", obj.lam, epsilon=1.0, n=n, D=0.5, A=L * mu)
w_cas, tr_cas = casimir_run(obj, sched, np.zeros(model.d), 15, SvrgConfig(lipschitz=L), seed=0)

# %% SGD on the non-smooth objective with the decaying step gamma0 / (1 + t // n).
w_sgd, tr_sgd = sgd_run(obj, gamma0=0.1, t0=n, w0=np.zeros(model.d), epochs=15, seed=0)

print("\noracle calls   casimir F(w)   sgd F(w)")
for a, b in zip(tr_cas.rows[::3], tr_sgd.rows[::3]):
    print(f"{a.oracle_calls:12d}   {a.objective:12.4f}   {b.objective:8.4f}")

for name, w in (("casimir", w_cas), ("sgd", w_sgd)):
    m_tr, m_te = evaluate(model, w, train), evaluate(model, w, test)
    print(f"{name:8s} train accuracy {m_tr.hamming_accuracy:.3f}  held-out accuracy {m_te.hamming_accuracy:.3f}")
