import numpy as np
import pytest
from hypothesis import settings

from cellattr.dataset import INTERPHASE, MITOTIC, Cell, Dataset, SpecimenSample
from cellattr.featmap import lift_histogram
from cellattr.linsvm import LinearModel

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def random_histograms(rng, n, d):
    H = rng.uniform(size=(n, d))
    return H / H.sum(axis=1, keepdims=True)


def random_cell(rng, d, cell_type=None):
    if cell_type is None:
        cell_type = INTERPHASE if rng.uniform() < 0.7 else MITOTIC
    return Cell(cell_type, random_histograms(rng, 3, d))


def random_specimen(rng, d, n_cells=None, label=0, sid="x", both_types=False):
    n = int(rng.integers(1, 10)) if n_cells is None else n_cells
    cells = [random_cell(rng, d) for _ in range(n)]
    if both_types:
        cells[0] = random_cell(rng, d, INTERPHASE)
        cells.append(random_cell(rng, d, MITOTIC))
    return SpecimenSample(sid, label, "weak", tuple(cells))


def random_dataset(rng, n_specimens, K, d, n_cells=None):
    samples = [random_specimen(rng, d, n_cells, label=i % K, sid=f"s{i}", both_types=True)
               for i in range(n_specimens)]
    return Dataset(tuple(samples), tuple(f"c{k}" for k in range(K)), d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synth():
    from cellattr.synth import SynthConfig, generate
    cfg = SynthConfig(n_classes=4, d=16, specimens_per_class=10, cells_min=6, cells_max=10,
                      mitotic_fraction=0.2, mitotic_only_classes=1, seed=3)
    return cfg, generate(cfg)


def random_instance(rng, J=None, b=None, d=None, N=None, K=None):
    """Random (svms, bases, bags, U, labels, lam) for the two objective forms."""
    J = J or int(rng.integers(1, 4))
    b = b or int(rng.integers(1, 5))
    d = d or int(rng.integers(2, 9))
    N = N or int(rng.integers(2, 21))
    K = K or int(rng.integers(2, 5))
    D = 3 * d
    bags = [[lift_histogram(random_histograms(rng, int(rng.integers(0, 4)), d))
             for _ in range(J)] for _ in range(N)]
    bases = [rng.normal(size=(D, b)) for _ in range(J)]
    svms = [LinearModel(rng.normal(size=J * b), float(rng.normal())) for _ in range(K)]
    labels = rng.integers(0, K, size=N)
    U = np.zeros((N, J * D))
    for i, bag in enumerate(bags):
        for j in range(J):
            if len(bag[j]):
                U[i, j * D:(j + 1) * D] = bag[j].mean(axis=0)
    return svms, bases, bags, U, labels, float(rng.uniform(0.5, 200))
