"""Python bindings for the xplain engine. JSON-shaped results come back as dicts."""
import json as _json

from . import _core
from ._core import (  # noqa: F401
    ArgumentError,
    KnowledgeGraph,
    NoSeedEntities,
    ParseError,
    SchemaError,
    XplainError,
    cosine,
    normalize_likert,
    overall,
    parse_scores,
    pearson,
    render_scores,
    write_planted,
)


class GatModel:
    """Graph attention reasoner. Keyword config: layers, hidden, options, relation_types, lm_dim, pool_size, seed."""

    def __init__(self, _native=None, **config):
        self._m = _native if _native is not None else _core.GatModel(_json.dumps(config))

    @classmethod
    def load(cls, path):
        return cls(_core.GatModel.load(str(path)))

    def save(self, path):
        self._m.save(str(path))

    @property
    def parameter_count(self):
        return self._m.parameter_count

    @property
    def lm_dim(self):
        return self._m.lm_dim

    def forward(self, element_graph, context, top=50):
        return _json.loads(self._m.forward(_json.dumps(element_graph), list(context), top))

    def grad_check(self, element_graph, context, gold, samples=200):
        return self._m.grad_check(_json.dumps(element_graph), list(context), gold, samples)


def train(model, data, epochs=10, lr=1e-3, batch=64, seed=0):
    """Trains in place on a JSONL file; returns (train accuracy, per-epoch losses)."""
    return _core.train(model._m, str(data), epochs, lr, batch, seed)


def prune(graph, question, options, n=200, hops=2, scorer=None, seed=0):
    return _json.loads(_core.prune(graph, question, list(options), n, hops, scorer, seed))


def read_instances(path):
    return _json.loads(_core.read_instances(str(path)))


def write_instances(path, records):
    _core.write_instances(str(path), _json.dumps(list(records)))


def validate_instance(record):
    return _core.validate_instance(_json.dumps(record))


def explain_offline(graph, model, question, options, label=None, n=200):
    return _json.loads(_core.explain_offline(graph, model._m, question, list(options), label, n))
