"""Shared hypothesis strategies and random-system generators."""
import numpy as np
from hypothesis import strategies as st


def random_stable(rng, n, p, m, radius=0.9, nonneg=False):
    A = rng.standard_normal((n, n))
    if nonneg:
        A = np.abs(A)
    rho = max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    A = A * (radius * rng.uniform(0.2, 1.0) / rho)
    B = rng.standard_normal((n, p))
    C = rng.standard_normal((m, n))
    if nonneg:
        B = np.abs(B)
    return A, B, C


@st.composite
def stable_systems(draw, max_n=3, max_p=2, max_m=2, nonneg=False):
    n = draw(st.integers(1, max_n))
    p = draw(st.integers(1, max_p))
    m = draw(st.integers(1, max_m))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_stable(np.random.default_rng(seed), n, p, m, nonneg=nonneg)


def random_integer_system(rng, n_max=4, io_max=5):
    """Sparse small-integer (A, B, C) so that exact and floating ranks agree."""
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(1, io_max + 1))
    m = int(rng.integers(1, io_max + 1))

    def sparse(shape, density):
        M = rng.integers(-2, 3, shape)
        return M * (rng.random(shape) < density)

    return sparse((n, n), 0.6), sparse((n, p), 0.6), sparse((m, n), 0.6)


def random_topology(rng, p, m):
    """Random grouping of B columns / C rows into components plus redundant
    controller and link ownership."""
    from cpsres.structure import ComponentTopology

    def group(size, prefix):
        k = int(rng.integers(1, size + 1))
        labels = rng.permutation(np.concatenate([np.arange(k), rng.integers(0, k, size - k)]))
        return {f"{prefix}{g}": tuple(int(i) for i in np.flatnonzero(labels == g)) for g in range(k)}

    acts, sens = group(p, "a"), group(m, "s")
    names = [*acts, *sens]
    ctrls = {}
    for c in range(int(rng.integers(1, 4))):
        own = [x for x in names if rng.random() < 0.5]
        ctrls[f"c{c}"] = (tuple(x for x in own if x in acts), tuple(x for x in own if x in sens))
    links = {}
    for ell in range(int(rng.integers(1, 5))):
        links[f"l{ell}"] = tuple(x for x in names if rng.random() < 0.4)
    return ComponentTopology(acts, sens, ctrls, links)
