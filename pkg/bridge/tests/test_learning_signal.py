"""End-to-end learning signal: behavior cloning on expert episodes from a
fixed small-scene family must clearly beat the random baseline on a
held-out suite of the same family.

This is the slowest test in the package (dataset generation, training,
and two 50-episode evaluations)."""

import pytest

from conftest import FAMILY, start_harness
from morphnav.dataset import generate_dataset
from morphnav.harness import PolicyHandle, make_benchmark, run_benchmark
from morphnav.sim import TaskSpec
from morphnav_bridge import bc_train, serve_policy

TASK = TaskSpec(target_category="chair", max_steps=80)


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("bc500"))
    generate_dataset(out, n=500, master_seed=31415, scene_params=FAMILY,
                     task_defaults=TASK)
    model, losses = bc_train(out, epochs=5, seed=0,
                             out_dir=str(tmp_path_factory.mktemp("bcrun")))
    assert losses[-1] < losses[0]
    return model


def test_cloned_policy_doubles_random_success_rate(trained_model):
    suite = make_benchmark(27183, 50, scene_params=FAMILY,
                           task_defaults=TASK)

    rand_summary, _ = run_benchmark(PolicyHandle(kind="random", seed=5),
                                    suite)

    t, holder, endpoint = start_harness(suite)
    stats = serve_policy(trained_model, endpoint, sample=False)
    t.join(timeout=3600)
    assert "error" not in holder, holder.get("error")
    bc_summary, results = holder["result"]

    assert stats["episodes"] == 50
    assert all(r.error is None for r in results)
    assert bc_summary.success_rate >= 2.0 * rand_summary.success_rate, (
        bc_summary.success_rate, rand_summary.success_rate)
    assert bc_summary.success_rate > 0.0
