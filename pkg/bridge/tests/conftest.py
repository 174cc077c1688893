import queue
import threading

import pytest

from morphnav.harness import serve_policy_bridge
from morphnav.scene import SceneParams

# the fixed small-scene family used for training and held-out evaluation
FAMILY = SceneParams(rooms_x=1, rooms_z=2)


@pytest.fixture(scope="session")
def family_params():
    return FAMILY


def start_harness(suite, **kwargs):
    """Run serve_policy_bridge on a thread; returns (thread, holder, endpoint).

    holder["result"] carries (summary, results) on success and
    holder["error"] the raised exception otherwise.
    """
    endpoints = queue.Queue()
    holder = {}

    def run():
        try:
            holder["result"] = serve_policy_bridge(
                suite, ready_callback=endpoints.put, timeout=300, **kwargs)
        except Exception as exc:
            holder["error"] = exc

    t = threading.Thread(target=run, daemon=True)
    t.start()
    return t, holder, endpoints.get(timeout=60)
