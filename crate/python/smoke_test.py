"""Smoke test for the hwrec_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/hwrec_py-*.whl
"""

import json
import math
import tempfile
from pathlib import Path

import hwrec_py as hw

SPEED = json.dumps({
    "weights": {"execution_time_ms": 0.7, "memory_mb": 0.1, "power_w": 0.1, "accuracy": 0.1},
    "thresholds": {"execution_time_ms": 100, "memory_mb": 1024, "power_w": 10, "accuracy": 0.9},
})


def check_metrics():
    assert abs(hw.f1_score(0.88, 0.85) - 0.8647) < 5e-5
    m = hw.classification_metrics([[45, 5], [10, 40]])
    assert abs(m["accuracy"] - 0.85) < 1e-12
    only_time = json.dumps({"weights": {"execution_time_ms": 1.0}, "thresholds": {"execution_time_ms": 100}})
    score = hw.objective_score(0.92, {"execution_time_ms": 90.0}, only_time)
    assert math.isclose(score, 0.92 * 100 / 90, rel_tol=1e-12)


def check_rankings():
    r = hw.weighted_copeland(
        {"a": {"execution_time_ms": 10.0}, "b": {"execution_time_ms": 20.0}},
        json.dumps({"weights": {"execution_time_ms": 1.0}, "thresholds": {"execution_time_ms": 100}}),
    )
    assert r.ids == ["a", "b"] and r.scores == [1.0, 0.0]
    fwd = hw.Ranking.from_scores({"a": 3, "b": 2, "c": 1, "d": 0})
    rev = hw.Ranking.from_scores({"a": 0, "b": 1, "c": 2, "d": 3})
    tied = hw.combine_selectors([("task", fwd), ("hardware", rev)])
    assert tied.scores == [1.5] * 4 and tied.ties == [[0, 1, 2, 3]]
    assert hw.kendall_tau(fwd, rev) == -1.0
    assert hw.Ranking.from_json(fwd.to_json()).ids == fwd.ids


def check_world_and_scorer():
    world = hw.World.generate(json.dumps({"n_models": 6, "n_hardware": 5, "n_tasks": 2, "dims": 3, "seed": 7}))
    task, device = world.task_ids[0], world.hardware_ids[0]
    measured = hw.weighted_copeland(world.benchmark(task, device), SPEED)
    truth = world.true_ranking(task, device, SPEED)
    assert measured.ids == truth.ids, (measured, truth)

    models = json.loads(world.registry_json("models"))
    tasks = json.loads(world.registry_json("tasks"))
    hardware = json.loads(world.registry_json("hardware"))
    train = world.training_set(SPEED, hardware_ids=world.hardware_ids[:4])
    config = json.dumps({
        "dims": {"model": len(models[0]["model_features"]),
                 "hardware": len(hardware[0]["hw_features"]),
                 "task": len(tasks[0]["task_features"])},
        "token_dim": 8,
        "heads": 2,
    })
    scorer, losses = hw.Scorer.train(config, train, json.dumps({"lr": 0.1, "epochs": 300}))
    assert losses[-1] < losses[0]
    assert scorer.mean_tau(train) >= 0.8

    ranking = scorer.recommend(json.dumps(tasks[0]), json.dumps(models), json.dumps(hardware[0]))
    assert sorted(ranking.ids) == sorted(world.model_ids)
    again = hw.Scorer.from_json(scorer.to_json())
    assert again.recommend(json.dumps(tasks[0]), json.dumps(models), json.dumps(hardware[0])).ids == ranking.ids


def check_store():
    world = hw.World.generate(json.dumps({"n_models": 3, "n_hardware": 1, "n_tasks": 1, "dims": 2, "seed": 1}))
    with tempfile.TemporaryDirectory() as d:
        store = hw.Store(Path(d) / "home")
        for kind in ("models", "hardware", "tasks"):
            path = Path(d) / f"{kind}.json"
            path.write_text(world.registry_json(kind))
            assert store.ingest(kind, path) >= 1
        assert store.record_count() == 0
        bad = Path(d) / "bad.json"
        bad.write_text("[{")
        try:
            store.ingest("models", bad)
        except ValueError:
            pass
        else:
            raise AssertionError("malformed registry accepted")


if __name__ == "__main__":
    check_metrics()
    check_rankings()
    check_world_and_scorer()
    check_store()
    print("hwrec_py smoke test passed")
