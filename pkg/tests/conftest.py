import numpy as np
import pytest

from casande_lab.datagen import GeneratorConfig, generate_kb, sample_patients
from casande_lab.knowledge import EvidenceKind, EvidenceSpec, KnowledgeBase, PathologySpec


def binary_kb(prior=(0.5, 0.5), p_yes=((0.9,), (0.1,)), severe=()):
    """Hand-written KB with binary evidences only; ``p_yes[d][e]`` = p(e = yes | d)."""
    D, E = len(prior), len(p_yes[0])
    evidences = tuple(EvidenceSpec(e, f"e{e}", EvidenceKind.BINARY, f"q{e}?") for e in range(E))
    pathologies = tuple(PathologySpec(d, f"d{d}", d in severe) for d in range(D))
    tables = tuple(np.array([[1 - p_yes[d][e], p_yes[d][e]] for d in range(D)]) for e in range(E))
    return KnowledgeBase(evidences, pathologies, np.array(prior), tables)


@pytest.fixture
def tiny_kb():
    return binary_kb()


@pytest.fixture(scope="session")
def toy_kb():
    return generate_kb(GeneratorConfig(seed=3, num_pathologies=6, num_evidences=12))


@pytest.fixture(scope="session")
def toy_patients(toy_kb):
    return sample_patients(toy_kb, 60, seed=11)


def random_batch(rng, n, S, A, D, terminal_p=0.5):
    from casande_lab.agent.losses import Batch

    masks = rng.random((n, A)) < 0.7
    masks[:, -1] = True
    y = rng.dirichlet(np.ones(D), size=n)
    return Batch(rng.normal(size=(n, S)), rng.integers(0, A, size=n), rng.normal(size=n),
                 rng.normal(size=(n, S)), rng.random(n) < terminal_p, masks, y)


def gradcheck(seed, h=1e-5):
    """Worst relative error between analytic and central-difference gradients
    of q_loss + classifier_loss on a random small network."""
    from casande_lab.agent.losses import classifier_loss, q_loss
    from casande_lab.agent.network import init_params

    rng = np.random.default_rng(seed)
    S, A, D, n = (int(v) for v in rng.integers(2, 6, size=4))
    params = init_params(S, A, D, rng, encoder=(5, 4), head=(3,))
    # zero biases put whole rows exactly on a ReLU kink once a layer is all dead;
    # differences are only meaningful at differentiable points
    for layer in params.layers():
        layer.b[:] = rng.normal(0.0, 0.5, size=layer.b.shape)
    batch = random_batch(rng, n, S, A, D)
    targets, exits = rng.normal(size=n), rng.normal(size=n)

    def total(p):
        lq, gq = q_loss(p, batch, targets, exits)
        lc, gc = classifier_loss(p, batch)
        return lq + lc, [a + b for a, b in zip(gq.arrays(), gc.arrays())]

    _, grads = total(params)
    worst = 0.0
    for arr, g in zip(params.arrays(), grads):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = total(params)[0]
            arr[idx] = old - h
            down = total(params)[0]
            arr[idx] = old
            num = (up - down) / (2 * h)
            err = abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-6)
            worst = max(worst, err)
    return worst


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
