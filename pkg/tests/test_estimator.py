import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from skelupdate import HIF, RSKELF, SkeletonFactorization
from skelupdate.kernels import bump_circle, laplace_dlp


def test_fit_solve_apply(circle_1024, rng):
    est = RSKELF(eps=1e-9).fit(circle_1024)
    b = rng.standard_normal(1024)
    x = est.solve(b)
    assert np.linalg.norm(circle_1024.matvec(x) - b) <= 1e-8 * np.linalg.norm(b)
    np.testing.assert_allclose(est.apply(x), b, rtol=1e-8, atol=1e-8)
    assert est.n_dofs_ == 1024 and est.fit_seconds_ > 0
    assert est.marks_ is None
    assert len(est.skeleton_stats()) == est.tree_.L
    assert np.isfinite(est.logdet().real)


def test_update_matches_refit(circle_1024):
    new = laplace_dlp(bump_circle(1024, 0.9 * np.pi, 1.05 * np.pi))
    est = RSKELF(eps=1e-6).fit(circle_1024)
    est.update(new)
    assert est.marks_.any and est.update_seconds_ > 0
    ref = RSKELF(eps=1e-6).fit(new, est.tree_)
    assert est.factorization_.same_blocks(ref.factorization_)


def test_hif_estimator(ls_16, rng):
    est = HIF(eps=1e-8, n_occ=16).fit(ls_16)
    b = rng.standard_normal(256)
    x = est.solve(b)
    assert np.linalg.norm(ls_16.matvec(x) - b) <= 1e-6 * np.linalg.norm(b)


def test_params_and_clone():
    est = RSKELF(eps=1e-4, n_occ=32)
    assert est.get_params() == {"eps": 1e-4, "n_occ": 32, "n_proxy": 64}
    c = clone(est)
    assert isinstance(c, RSKELF) and c.get_params() == est.get_params()
    g = SkeletonFactorization(kind="hif").set_params(eps=1e-3)
    assert g.get_params()["kind"] == "hif" and g.eps == 1e-3


def test_validation(circle_1024):
    with pytest.raises(NotFittedError):
        RSKELF().solve(np.ones(3))
    with pytest.raises(ValueError):
        SkeletonFactorization(kind="lu").fit(circle_1024)
    with pytest.raises(ValueError):
        RSKELF(eps=2.0).fit(circle_1024)
    with pytest.raises(ValueError):
        RSKELF(n_occ=2).fit(circle_1024)
    with pytest.raises(TypeError):
        RSKELF().fit(np.eye(4))
    est = RSKELF(eps=1e-3).fit(circle_1024)
    with pytest.raises(ValueError):
        est.solve(np.ones(5))
    with pytest.raises(ValueError):
        est.solve(np.full(1024, np.nan))
