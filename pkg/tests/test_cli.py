import csv
import json
import struct
from pathlib import Path

import numpy as np
import pytest

from casimir.cli import BENCH_COLUMNS, CSV_COLUMNS, FORMAT_VERSION, MAGIC, load_model, main, save_model
from casimir.errors import ModelFormatError
from casimir.tasks import featurize, read_conll

FIXTURES = Path(__file__).parent / "fixtures"
TRAIN = str(FIXTURES / "synth_train.conll")
TEST = str(FIXTURES / "synth_test.conll")
FAST = ["--set", "hash_bits=10", "--set", "lipschitz=8"]


def train(tmp_path, *extra, name="run"):
    csv_path, model_path = tmp_path / f"{name}.csv", tmp_path / f"{name}.bin"
    code = main(["train", "--train", TRAIN, "--csv", str(csv_path), "--model", str(model_path), *FAST, *extra])
    return code, csv_path, model_path


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_train_writes_five_rows(tmp_path):
    code, csv_path, model_path = train(tmp_path, "--algorithm", "casimir-svrg-const", "--iters", "5")
    assert code == 0
    rows = read_rows(csv_path)
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 6
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3, 4, 5]
    calls = [int(r[1]) for r in rows[1:]]
    assert calls == sorted(calls) and calls[0] == 40
    assert all(r[4] == "0" for r in rows[1:])
    assert model_path.is_file()


def test_train_is_deterministic(tmp_path):
    a = train(tmp_path, "--iters", "3", "--seed", "11", name="a")
    b = train(tmp_path, "--iters", "3", "--seed", "11", name="b")
    assert a[0] == b[0] == 0
    assert a[1].read_bytes() == b[1].read_bytes()
    assert a[2].read_bytes() == b[2].read_bytes()


def test_missing_data_exit_two(tmp_path):
    csv_path, model_path = tmp_path / "m.csv", tmp_path / "m.bin"
    code = main(["train", "--train", str(tmp_path / "nope.conll"), "--csv", str(csv_path), "--model", str(model_path)])
    assert code == 2
    assert list(tmp_path.iterdir()) == []


def test_unknown_config_key(tmp_path):
    code, _, _ = train(tmp_path, "--set", "learning_rate=3")
    assert code == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# demo\ntrain = {TRAIN}\nalgorithm = sgd\niters = 4\nhash_bits = 10\n"
                   f"csv = {tmp_path / 'c.csv'}\nmodel = {tmp_path / 'c.bin'}\n")
    assert main(["train", "--config", str(cfg), "--iters", "2"]) == 0
    assert len(read_rows(tmp_path / "c.csv")) == 3


@pytest.mark.parametrize("algorithm", ["sgd", "svrg", "casimir-svrg-adapt", "proxlinear"])
def test_every_algorithm_runs(tmp_path, algorithm):
    code, csv_path, _ = train(tmp_path, "--algorithm", algorithm, "--iters", "2")
    assert code == 0
    assert len(read_rows(csv_path)) == 3


def test_eval_json(tmp_path, capsys):
    _, _, model_path = train(tmp_path, "--iters", "3")
    capsys.readouterr()
    assert main(["eval", "--model", str(model_path), "--data", TEST]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"hamming_accuracy", "token_f1_micro", "per_class_f1"}
    assert 0 <= out["hamming_accuracy"] <= 1


def test_eval_perfect_on_training_fixture(tmp_path, capsys):
    toy = str(FIXTURES / "toy.conll")
    model_path = tmp_path / "toy.bin"
    code = main(["train", "--train", toy, "--csv", str(tmp_path / "toy.csv"), "--model", str(model_path),
                 "--iters", "20", "--set", "hash_bits=12", "--set", "c=0.01"])
    assert code == 0
    capsys.readouterr()
    assert main(["eval", "--model", str(model_path), "--data", toy]) == 0
    assert json.loads(capsys.readouterr().out)["hamming_accuracy"] == 1.0


def test_model_round_trip(tmp_path):
    ds = read_conll(FIXTURES / "toy.conll")
    model = featurize(ds, hash_bits=9, hash_seed=4)
    w = np.random.default_rng(0).standard_normal(model.d)
    save_model(tmp_path / "m.bin", model, w)
    m2, w2 = load_model(tmp_path / "m.bin")
    assert np.array_equal(w, w2)
    assert (m2.label_alphabet, m2.hash_bits, m2.hash_seed, m2.num_columns) == (model.label_alphabet, 9, 4, 3)


def test_corrupted_model_magic(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a model at all")
    assert main(["eval", "--model", str(bad), "--data", TEST]) == 1
    assert "magic" in capsys.readouterr().err
    with pytest.raises(ModelFormatError, match="magic"):
        load_model(bad)


def test_model_version_mismatch(tmp_path):
    ds = read_conll(FIXTURES / "toy.conll")
    model = featurize(ds, hash_bits=8)
    save_model(tmp_path / "m.bin", model, np.zeros(model.d))
    data = bytearray((tmp_path / "m.bin").read_bytes())
    struct.pack_into("<H", data, len(MAGIC), FORMAT_VERSION + 1)
    (tmp_path / "m.bin").write_bytes(bytes(data))
    with pytest.raises(ModelFormatError, match=f"version {FORMAT_VERSION + 1}.*version {FORMAT_VERSION}"):
        load_model(tmp_path / "m.bin")


def test_truncated_model(tmp_path):
    ds = read_conll(FIXTURES / "toy.conll")
    model = featurize(ds, hash_bits=8)
    save_model(tmp_path / "m.bin", model, np.zeros(model.d))
    (tmp_path / "m.bin").write_bytes((tmp_path / "m.bin").read_bytes()[:-8])
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "m.bin")


def bench(tmp_path, *extra, name="bench.csv"):
    out = tmp_path / name
    code = main(["bench", "--train", TRAIN, "--out", str(out), "--algorithms", "sgd,casimir-svrg-const",
                 "--seeds", "0,1,2", "--iters", "10", *FAST, *extra])
    return code, out


def test_bench_cardinality_and_accounting(tmp_path):
    code, out = bench(tmp_path)
    assert code == 0
    rows = read_rows(out)
    assert tuple(rows[0]) == BENCH_COLUMNS
    assert len(rows) == 61
    keys = {(r[0], r[1], r[2]) for r in rows[1:]}
    assert len(keys) == 60
    casimir = [r for r in rows[1:] if r[0] == "casimir-svrg-const" and r[1] == "0"]
    assert [int(r[3]) for r in casimir] == [40 * k for k in range(1, 11)]

    code, full = bench(tmp_path, "--count-full-gradients", name="full.csv")
    assert code == 0
    casimir = [r for r in read_rows(full)[1:] if r[0] == "casimir-svrg-const" and r[1] == "0"]
    # each outer iteration adds one anchor pass of n calls
    assert [int(r[3]) for r in casimir] == [80 * k for k in range(1, 11)]


def test_bench_seeds_reproducible(tmp_path):
    _, a = bench(tmp_path, name="a.csv")
    code = main(["bench", "--train", TRAIN, "--out", str(tmp_path / "b.csv"), "--algorithms", "sgd",
                 "--seeds", "2", "--iters", "10", *FAST])
    assert code == 0
    sub = [r for r in read_rows(a)[1:] if r[0] == "sgd" and r[1] == "2"]
    assert sub == read_rows(tmp_path / "b.csv")[1:]
