"""Sequence tagging: CoNLL column files, hashed window features, synthetic data and metrics."""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError
from .graph import LabelDomain, PotentialTable, TreeTopology
from .loss import ChainExample, LinearChainModel
from .oracles import viterbi

UNKNOWN_TAG = -1
HASH_VERSION = 1
START, STOP = "<start>", "<stop>"


@dataclass(frozen=True)
class Sentence:
    tokens: tuple  # per token, a tuple of attribute strings (every column but the last)
    tags: tuple  # gold label indices (UNKNOWN_TAG for tags outside the alphabet)


@dataclass(frozen=True)
class TaggedDataset:
    sentences: tuple
    label_alphabet: tuple

    def __len__(self):
        return len(self.sentences)

    @property
    def num_tokens(self) -> int:
        return sum(len(s.tags) for s in self.sentences)


# --- CoNLL files ------------------------------------------------------------


def _is_separator(fields) -> bool:
    return not fields or fields[0] == "-DOCSTART-"


def read_conll(path, label_alphabet=None) -> TaggedDataset:
    """Read whitespace-separated columns; blank lines separate sentences, the last column is the tag.

    Without ``label_alphabet`` the alphabet is built in first-seen order. With one (evaluation
    data) unseen tags map to ``UNKNOWN_TAG`` with a warning. ``-DOCSTART-`` lines act as separators.
    """
    alphabet = list(label_alphabet) if label_alphabet is not None else []
    index = {t: i for i, t in enumerate(alphabet)}
    frozen = label_alphabet is not None
    sentences, tokens, tags = [], [], []
    width, unknown = None, set()

    def flush():
        if tokens:
            sentences.append(Sentence(tuple(tokens), tuple(tags)))
            tokens.clear()
            tags.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if _is_separator(fields):
                flush()
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} columns, found {len(fields)}")
            tag = fields[-1]
            if tag not in index:
                if frozen:
                    unknown.add(tag)
                    tags.append(UNKNOWN_TAG)
                    tokens.append(tuple(fields[:-1]))
                    continue
                index[tag] = len(alphabet)
                alphabet.append(tag)
            tokens.append(tuple(fields[:-1]))
            tags.append(index[tag])
    flush()
    if unknown:
        warnings.warn(f"tags not in the label alphabet mapped to index {UNKNOWN_TAG}: {sorted(unknown)}")
    return TaggedDataset(tuple(sentences), tuple(alphabet))


def write_conll(dataset: TaggedDataset, path):
    """Write ``dataset`` in the column format read by :func:`read_conll`."""
    lines = []
    for s in dataset.sentences:
        for attrs, tag in zip(s.tokens, s.tags):
            if tag == UNKNOWN_TAG:
                raise InvalidInputError("cannot write a token whose tag is unknown")
            lines.append(" ".join((*attrs, dataset.label_alphabet[tag])))
        lines.append("")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# --- features -----------------------------------------------------------------


def _string_hash(s: str, seed: int) -> int:
    key = int(seed).to_bytes(8, "little", signed=False)
    return int.from_bytes(hashlib.blake2b(s.encode("utf-8"), digest_size=8, key=key).digest(), "little")


def _mix(h: np.ndarray, tag: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer over (feature hash, tag)
    with np.errstate(over="ignore"):
        x = h ^ ((tag.astype(np.uint64) + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15))
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


class HashedChainModel(LinearChainModel):
    """Linear chain model whose unary block hashes (offset, column, value, tag) conjunctions.

    Every token gets one feature per window offset and attribute column, plus a bias; tokens
    outside the sentence read as ``<start>``/``<stop>``. Unary indices live in ``[0, 2^b - 1)``.
    """

    def __init__(self, label_alphabet, num_columns: int, window: int = 2, hash_bits: int = 16, hash_seed: int = 0):
        if not 8 <= hash_bits <= 30:
            raise InvalidInputError(f"hash_bits must lie in [8, 30], got {hash_bits}")
        super().__init__(len(label_alphabet), (1 << hash_bits) - 1)
        self.label_alphabet = tuple(label_alphabet)
        self.num_columns = int(num_columns)
        self.window = int(window)
        self.hash_bits = int(hash_bits)
        self.hash_seed = int(hash_seed)
        self._cache = {}

    def _base(self, name: str) -> int:
        h = self._cache.get(name)
        if h is None:
            h = self._cache[name] = _string_hash(name, self.hash_seed)
        return h

    def feature_names(self, sentence: Sentence, v: int) -> list:
        p = len(sentence.tokens)
        names = ["bias"]
        for off in range(-self.window, self.window + 1):
            u = v + off
            for c in range(self.num_columns):
                value = START if u < 0 else STOP if u >= p else sentence.tokens[u][c]
                names.append(f"{off}|{c}|{value}")
        return names

    def encode_sentence(self, sentence: Sentence) -> ChainExample:
        if any(len(t) != self.num_columns for t in sentence.tokens):
            raise InvalidInputError(f"expected {self.num_columns} attribute columns per token")
        base = np.array(
            [[self._base(f) for f in self.feature_names(sentence, v)] for v in range(len(sentence.tokens))],
            dtype=np.uint64,
        )
        tags = np.arange(self.num_tags, dtype=np.uint64)
        mixed = _mix(base[:, :, None], tags[None, None, :])
        unary = (mixed % np.uint64(self.hash_dim)).astype(np.int64)
        return ChainExample(unary, np.ones(base.shape), tuple(int(t) for t in sentence.tags))

    def encode(self, dataset: TaggedDataset) -> list:
        if tuple(dataset.label_alphabet[: self.num_tags]) != self.label_alphabet:
            raise InvalidInputError("dataset label alphabet does not match the model's")
        return [self.encode_sentence(s) for s in dataset.sentences if s.tokens]


def featurize(dataset: TaggedDataset, window: int = 2, hash_bits: int = 16, hash_seed: int = 0) -> HashedChainModel:
    """Hashed window feature model for ``dataset``; call ``.encode(dataset)`` for the examples."""
    columns = {len(t) for s in dataset.sentences for t in s.tokens}
    if len(columns) > 1:
        raise InvalidInputError(f"tokens have differing column counts {sorted(columns)}")
    return HashedChainModel(dataset.label_alphabet, columns.pop() if columns else 1, window, hash_bits, hash_seed)


# --- synthetic data -----------------------------------------------------------


def sample_chain(pot: PotentialTable, rng, temperature: float = 1.0) -> tuple:
    """Exact sample from ``p(y) ∝ exp(psi(y) / temperature)`` by forward filtering, backward sampling."""
    nodes = [t / temperature for t in pot.node_scores]
    edges = [None if e is None else e / temperature for e in pot.edge_scores]
    alpha = [nodes[0]]
    for v in range(1, len(nodes)):
        prev = alpha[-1]
        m = (prev[None, :] + edges[v]).max(axis=1)
        alpha.append(nodes[v] + m + np.log(np.exp(prev[None, :] + edges[v] - m[:, None]).sum(axis=1)))

    def draw(logits):
        pr = np.exp(logits - logits.max())
        return int(rng.choice(len(pr), p=pr / pr.sum()))

    y = [draw(alpha[-1])]
    for v in range(len(nodes) - 1, 0, -1):
        y.append(draw(alpha[v - 1] + edges[v][y[-1]]))
    return tuple(reversed(y))


def synth_chain_dataset(seed: int, n: int, p: int, num_tags: int, vocab: int = 50, noise: float = 0.0,
                        temperature: float = 1.0) -> TaggedDataset:
    """Tagged sequences drawn from a random ground-truth chain model.

    Words are uniform over the vocabulary; each word prefers one tag. Tags are sampled from
    the model's Gibbs distribution at ``temperature`` given the words, then each is replaced by
    a uniform tag with probability ``noise``. Tokens carry two columns: the word and a coarse
    word class.
    """
    if min(n, p, num_tags, vocab) < 1:
        raise InvalidInputError("n, p, num_tags and vocab must be at least 1")
    rng = np.random.default_rng(seed)
    emission = 0.5 * rng.standard_normal((num_tags, vocab))
    emission[np.arange(vocab) % num_tags, np.arange(vocab)] += 2.0
    transition = rng.standard_normal((num_tags, num_tags))  # [current, previous]
    topo, domain = TreeTopology.chain(p), LabelDomain((num_tags,) * p)
    alphabet = tuple(f"T{t}" for t in range(num_tags))
    sentences = []
    for _ in range(n):
        words = rng.integers(0, vocab, p)
        pot = PotentialTable(topo, domain, tuple(emission[:, words].T), (None,) + (transition,) * (p - 1))
        tags = list(sample_chain(pot, rng, temperature))
        flips = rng.random(p) < noise
        for v in np.nonzero(flips)[0]:
            tags[v] = int(rng.integers(num_tags))
        tokens = tuple((f"w{w}", f"c{w % 7}") for w in words)
        sentences.append(Sentence(tokens, tuple(tags)))
    return TaggedDataset(tuple(sentences), alphabet)


# --- metrics --------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    """Hamming (token) accuracy and token-level F1.

    ``token_f1_micro`` pools every class except an ``O`` tag when the alphabet has one
    (with no ``O`` tag it equals accuracy on known tags).
    """

    hamming_accuracy: float
    token_f1_micro: float
    per_class_f1: dict


def _f1(tp, n_pred, n_gold) -> float:
    if n_pred + n_gold == 0:
        return 1.0
    return 2.0 * tp / (n_pred + n_gold)


def token_metrics(gold, pred, label_alphabet, outside_tag: str = "O") -> Metrics:
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise InvalidInputError("gold and predicted label sequences differ in length")
    if gold.size == 0:
        return Metrics(1.0, 1.0, {})
    per_class = {}
    tp_all = pred_all = gold_all = 0
    for c, name in enumerate(label_alphabet):
        tp = int(np.sum((pred == c) & (gold == c)))
        n_pred, n_gold = int(np.sum(pred == c)), int(np.sum(gold == c))
        if n_pred + n_gold:
            per_class[name] = _f1(tp, n_pred, n_gold)
        if name != outside_tag:
            tp_all, pred_all, gold_all = tp_all + tp, pred_all + n_pred, gold_all + n_gold
    if outside_tag not in label_alphabet:
        gold_all = int(gold.size)  # unknown gold tags count as misses
    return Metrics(float(np.mean(gold == pred)), _f1(tp_all, pred_all, gold_all), per_class)


def predict(model: HashedChainModel, w, dataset: TaggedDataset) -> list:
    """Viterbi labelings under the un-augmented scores."""
    return [viterbi(model.potentials(ex, w))[1] for ex in model.encode(dataset)]


def evaluate(model: HashedChainModel, w, dataset: TaggedDataset) -> Metrics:
    if tuple(dataset.label_alphabet[: model.num_tags]) != model.label_alphabet:
        raise InvalidInputError("dataset label alphabet does not match the model's")
    preds = predict(model, w, dataset)
    gold = [t for s in dataset.sentences if s.tokens for t in s.tags]
    return token_metrics(gold, [t for y in preds for t in y], model.label_alphabet)
