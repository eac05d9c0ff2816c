"""The command line in one pass: write data, train, evaluate, benchmark.

Equivalent shell session::

    casimir train --train train.conll --eval test.conll --iters 5 --csv m.csv --model m.bin
    casimir eval --model m.bin --data test.conll
    casimir bench --train train.conll --algorithms sgd,casimir-svrg-const --seeds 0,1 --iters 5 --out b.csv

Run: python demos/04_cli_roundtrip.py
"""

import tempfile
from pathlib import Path

from casimir.cli import main
from casimir.tasks import TaggedDataset, synth_chain_dataset, write_conll

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    # Both splits come from one draw so they share the ground-truth model.
    ds = synth_chain_dataset(1, 80, 8, 4, temperature=1e-3)
    write_conll(TaggedDataset(ds.sentences[:60], ds.label_alphabet), tmp / "train.conll")
    write_conll(TaggedDataset(ds.sentences[60:], ds.label_alphabet), tmp / "test.conll")

    # %% A config file holds the run; flags override it.
    (tmp / "run.cfg").write_text("algorithm = casimir-svrg-const\nsmoother = topk_l2\nmu = 0.2\nK = 5\n"
                                 "c = 1.0\nhash_bits = 12\nlipschitz = 20\n")
    main(["train", "--config", str(tmp / "run.cfg"), "--train", str(tmp / "train.conll"),
          "--eval", str(tmp / "test.conll"), "--iters", "5",
          "--csv", str(tmp / "m.csv"), "--model", str(tmp / "m.bin")])
    print((tmp / "m.csv").read_text())

    main(["eval", "--model", str(tmp / "m.bin"), "--data", str(tmp / "test.conll")])

    main(["bench", "--config", str(tmp / "run.cfg"), "--train", str(tmp / "train.conll"),
          "--algorithms", "sgd,casimir-svrg-const", "--seeds", "0,1", "--iters", "5",
          "--set", "gamma0=0.1", "--out", str(tmp / "b.csv")])
    print((tmp / "b.csv").read_text())
