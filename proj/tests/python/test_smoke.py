import math
import os
import pathlib

import pytest

import xplainkg as xk

FIXTURES = pathlib.Path(os.environ.get("XPLAIN_FIXTURES", pathlib.Path(__file__).parent.parent / "fixtures"))

TRIPLES = """AtLocation\tcup\ttable
AtLocation\tcoffee\tcup
UsedFor\tsink\twashing
AtLocation\tcup\tsink
RelatedTo\tdrinking\tcoffee
AtLocation\tbed\tbedroom
AtLocation\tshelf\tcup
RelatedTo\tfloor\tbed
"""
QUESTION = "Where would you put a cup of coffee after you finish drinking it?"
OPTIONS = ["table", "floor", "sink", "bed", "shelf"]


@pytest.fixture
def graph(tmp_path):
    p = tmp_path / "g.tsv"
    p.write_text(TRIPLES)
    g = xk.KnowledgeGraph.from_triples(str(p))
    g.save(str(tmp_path / "g.bin"))
    return xk.KnowledgeGraph.load(str(tmp_path / "g.bin"))


def test_graph_and_prune(graph):
    assert graph.node_count == 10
    eg = xk.prune(graph, QUESTION, OPTIONS, n=4)
    assert len(eg["nodes"]) == 4
    # a Python scorer: prefer "sink"
    eg = xk.prune(graph, QUESTION, OPTIONS, n=1, scorer=lambda label, q, opts: 5.0 if label == "sink" else -5.0)
    assert [n["label"] for n in eg["nodes"]] == ["sink"]
    with pytest.raises(xk.ArgumentError):
        xk.prune(graph, QUESTION, ["sink"])


def test_forward_and_grad_check(graph):
    eg = xk.prune(graph, QUESTION, OPTIONS)
    model = xk.GatModel(layers=2, hidden=8, options=5, relation_types=3, lm_dim=4, pool_size=4, seed=1)
    out = model.forward(eg, [0.1, -0.2, 0.3, 0.0], top=5)
    assert math.isclose(sum(out["probabilities"]), 1.0, abs_tol=1e-12)
    assert len(out["reason_elements"]) == 5
    assert model.grad_check(eg, [0.1, -0.2, 0.3, 0.0], gold=2) < 1e-4


def test_train_planted(tmp_path):
    data = tmp_path / "planted.jsonl"
    xk.write_planted(str(data), 60, 1)
    model = xk.GatModel(layers=2, hidden=16, options=4, relation_types=3, lm_dim=8, seed=3)
    acc, losses = xk.train(model, data, epochs=15, lr=1e-3, batch=16, seed=5)
    assert losses[-1] < losses[0]
    model.save(tmp_path / "m.ckpt")
    assert xk.GatModel.load(tmp_path / "m.ckpt").parameter_count == model.parameter_count


def test_scores_and_likert():
    assert xk.parse_scores("Faithfulness: 4 | Completeness: 3 | Accuracy: 4") == (4, 3, 4)
    assert xk.render_scores(4, 3, 4) == "Faithfulness: 4 | Completeness: 3 | Accuracy: 4"
    assert abs(xk.overall(4.05, 3.65, 4.10) - 3.93) < 0.005
    with pytest.raises(xk.ParseError):
        xk.parse_scores("no numbers here")
    assert [xk.normalize_likert(v) for v in (1, 2, 3)] == [0.0, 0.5, 1.0]
    assert xk.pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-12)
    assert xk.cosine([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0, abs=1e-12)


def test_dataset_round_trip(tmp_path):
    recs = xk.read_instances(FIXTURES / "worked_instance.jsonl")
    assert recs[0]["predicted_label"] == "unfeeling"
    assert xk.validate_instance(recs[0]) == []
    xk.write_instances(tmp_path / "out.jsonl", recs)
    assert (tmp_path / "out.jsonl").read_bytes() == (FIXTURES / "worked_instance.jsonl").read_bytes()


def test_explain_offline(graph):
    model = xk.GatModel(layers=2, hidden=8, options=5, relation_types=3, lm_dim=16, seed=2)
    inst = xk.explain_offline(graph, model, QUESTION, OPTIONS, label="sink")
    assert inst["label"] == "sink"
    assert inst["topk"] == inst["concept"][:5]
    assert inst["debugger_score"] == "Faithfulness: 4 | Completeness: 3 | Accuracy: 4"
