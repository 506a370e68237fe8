"""Shared toy checkpoints: small models trained once per session on synthetic
shapes, backing the service, CLI, and acceptance tests."""

import pytest

from sketchlm.experiments import build_toy_service

TOY_CLASSES = ("square", "triangle")


@pytest.fixture(scope="session")
def toy_checkpoints(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy-ckpts")
    return build_toy_service(root, TOY_CLASSES)


@pytest.fixture(scope="session")
def toy_service_config(toy_checkpoints):
    from sketchlm.service import ServiceConfig

    return ServiceConfig(
        completion_checkpoints={c: toy_checkpoints[c] for c in TOY_CLASSES},
        classifier_checkpoint=toy_checkpoints["__classifier__"],
        max_num_samples=5,
        max_prefix_points=500,
    )


@pytest.fixture(scope="session")
def square_prefix_strokes():
    """Two raw strokes: the left and bottom edges of a square, pixel scale."""
    return [
        [0.0, 0.0, 0],
        [0.0, 100.0, 1],
        [0.0, -100.0, 0],
        [100.0, 0.0, 1],
    ]
