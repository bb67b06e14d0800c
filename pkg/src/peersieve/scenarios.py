"""Built-in configurations.

The smoke scenario is the reference end-to-end setup: nine agents share one
300 m field of view over a 200x200 m world, the ego misses a tenth of the
objects, and the last collaborator shifts everything it reports by ten
meters. Those misses matter: they put genuine unexplained content into every
fused view, which keeps benign scores below 1 and pushes a shifting
attacker's score strictly under the initial 0.5 threshold.
"""

from __future__ import annotations

import math

from .scene import SimConfig, parse_sim_config

DEFAULT_MASTER_SEED = 1000003

SMOKE_WORLD = 200.0
SMOKE_COLLABORATORS = 8


def _smoke_agents() -> list[dict]:
    center = SMOKE_WORLD / 2.0
    agents: list[dict] = [{
        "pose": [center, center],
        "fov_radius": 300.0,
        "p_detect": 0.9,
        "pos_noise_sigma": 0.25,
        "false_positive_rate": 0.0,
        "role": "benign",
    }]
    for k in range(SMOKE_COLLABORATORS):
        angle = 2.0 * math.pi * k / SMOKE_COLLABORATORS
        agent = {
            "pose": [center + 60.0 * math.cos(angle),
                     center + 60.0 * math.sin(angle)],
            "fov_radius": 300.0,
            "p_detect": 1.0,
            "pos_noise_sigma": 0.25,
            "false_positive_rate": 0.0,
            "role": "benign",
        }
        if k == SMOKE_COLLABORATORS - 1:
            agent["role"] = "malicious"
            agent["attack"] = {"kind": "shift", "offset_m": 10.0}
        agents.append(agent)
    return agents


def smoke_e2e_doc() -> dict:
    return {
        "sim": {
            "world": {"width_m": SMOKE_WORLD, "height_m": SMOKE_WORLD},
            "objects": {"count": 30, "class_count": 4,
                        "min_extent_m": 2.0, "max_extent_m": 5.0},
            "agents": _smoke_agents(),
            # below the library default: with two independent 0.25 m jitters a
            # small box pair can land near IoU 0.5, and an unmerged duplicate
            # counts against its own sender
            "fusion": {"merge_iou": 0.3},
        },
        "frames": 100,
        "epsilon0": 0.5,
        "phi": 1.0,
        "n_max": None,
        "threshold": {"alpha": 0.05, "beta": 0.05, "window": 100,
                      "window_min": 10, "eta": 0.1},
    }


def smoke_sim_config() -> SimConfig:
    return parse_sim_config(smoke_e2e_doc()["sim"])


def default_theorems_doc() -> dict:
    return {
        "thm1": {"alpha": 0.005, "beta": 0.005, "n": 16, "m": 2,
                 "trials": 50000},
        "thm2": {"n_range": [1, 64], "m_range": None, "trials": 10000},
        "thm3": {"benign": {"mean": 0.8, "sigma": 0.05},
                 "contam": {"mean": 0.3, "sigma": 0.05},
                 "alpha": 0.05, "beta": 0.05, "stream_len": 10000},
    }


def default_bench_doc() -> dict:
    return {
        "n_values": [10],
        "m_values": [2, 4, 6, 8],
        "methods": ["pasac", "linear", "random"],
        "trials": 1000,
        "alpha": 0.0,
        "beta": 0.0,
        "n_max": None,
        "max_attempts": 1000,
        "timing": False,
    }


def default_trace_doc() -> dict:
    return {
        "benign": {"mean": 0.8, "sigma": 0.05},
        "contam": {"mean": 0.3, "sigma": 0.05},
        "threshold": {"alpha": 0.05, "beta": 0.05, "window": 100,
                      "window_min": 10, "eta": 0.1},
        "initial_epsilons": [0.001, 0.05, 0.1, 0.5, 0.8],
        "stream_len": 1000,
        "settle_after": 500,
    }
