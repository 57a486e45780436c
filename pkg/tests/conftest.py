import numpy as np
import pytest

from rbskin import scenes
from rbskin.geometry import BoundaryShape, WindingContext
from rbskin.skeleton import Handle, HandleSet


@pytest.fixture(scope="session")
def bar_shape():
    return BoundaryShape.from_arrays(*scenes.bar())


@pytest.fixture(scope="session")
def bar_handles(bar_shape):
    nz = bar_shape.normalization
    return HandleSet([Handle.point(nz.apply([6.5, 7.5])), Handle.point(nz.apply([57.5, 7.5]))])


@pytest.fixture(scope="session")
def u_shape():
    return BoundaryShape.from_arrays(*scenes.u_shape())


@pytest.fixture(scope="session")
def cube_shape():
    return BoundaryShape.from_arrays(*scenes.cube(0.25, 0.75), normalize=False)


@pytest.fixture(scope="session")
def sphere_shape():
    return BoundaryShape.from_arrays(*scenes.icosphere(2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def bar_ctx(bar_shape):
    return WindingContext(bar_shape)


@pytest.fixture(scope="session")
def small_bar_field(bar_shape, bar_handles):
    from rbskin.config import SolveConfig
    from rbskin.optim import train
    cfg = SolveConfig(steps=30, batch_size=256, n_initial=256, upsamplings=1)
    return train(cfg, bar_shape, bar_handles).field


@pytest.fixture(scope="session")
def bar_files(tmp_path_factory):
    """Bar boundary CSV and a two-handle skeleton JSON in the original frame."""
    import json
    from rbskin.geometry import write_edge_csv
    d = tmp_path_factory.mktemp("bar")
    v, e = scenes.bar()
    write_edge_csv(d / "bar.csv", v, e)
    (d / "bar.json").write_text(json.dumps({"handles": [
        {"type": "point", "p": [6.5, 7.5]}, {"type": "point", "p": [57.5, 7.5]}]}))
    return d


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    verdicts = getattr(mod, "VERDICTS", {})
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
