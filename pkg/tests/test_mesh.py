import numpy as np
import pytest

from wgporo.mesh import build_dof_maps, build_mesh


@pytest.mark.parametrize("n,dim,nel,nfac,nbnd", [
    (8, 2, 64, 144, 32),
    (2, 3, 8, 36, 24),
    (1, 2, 1, 4, 4),
    (3, 3, 27, 108, 54),
])
def test_entity_counts(n, dim, nel, nfac, nbnd):
    m = build_mesh(n, dim)
    assert m.n_elements == nel
    assert m.n_facets == nfac
    assert m.boundary.sum() == nbnd


@pytest.mark.parametrize("n,dim,scalar_free,vector_free", [
    (8, 2, 176, 352), (2, 3, 20, 60), (1, 2, 1, 2)])
def test_free_dof_counts(n, dim, scalar_free, vector_free):
    dm = build_dof_maps(build_mesh(n, dim))
    assert dm.n_scalar_free == scalar_free
    assert dm.n_vector_free == vector_free
    assert dm.n_vector_full == dim * dm.n_scalar_full


@pytest.mark.parametrize("n,dim", [(4, 2), (3, 3)])
def test_facet_element_adjacency_is_consistent(n, dim):
    m = build_mesh(n, dim)
    for e in range(m.n_elements):
        for lf in range(2 * dim):
            f = m.elem_facets[e, lf]
            axis, side = divmod(lf, 2)
            assert m.facet_axis[f] == axis
            # the low-side facet of e has e as its upper neighbour
            assert m.facet_elements[f, 1 - side] == e
            offset = np.zeros(dim)
            offset[axis] = (m.h / 2) * (1 if side else -1)
            np.testing.assert_allclose(m.facet_midpoints[f], m.centroids[e] + offset)
    assert np.all((m.facet_elements == -1).any(axis=1) == m.boundary)


def test_first_axis_fastest():
    m = build_mesh(4, 2)
    np.testing.assert_allclose(m.centroids[:2], [[0.125, 0.125], [0.375, 0.125]])


def test_facet_normals_are_unit_axis_vectors():
    m = build_mesh(2, 3)
    N = m.facet_normals()
    np.testing.assert_array_equal(N.sum(axis=1), 1.0)
    np.testing.assert_array_equal(np.argmax(N, axis=1), m.facet_axis)


def test_local_maps_index_full_numbering():
    m = build_mesh(3, 2)
    dm = build_dof_maps(m)
    sl = dm.scalar_local()
    assert sl.shape == (9, 5)
    np.testing.assert_array_equal(sl[:, 0], np.arange(9))
    np.testing.assert_array_equal(sl[:, 1:], m.n_elements + m.elem_facets)
    vl = dm.vector_local()
    np.testing.assert_array_equal(vl[:, 0::2], 2 * sl)
    np.testing.assert_array_equal(vl[:, 1::2], 2 * sl + 1)


def test_free_and_constrained_partition():
    dm = build_dof_maps(build_mesh(4, 2))
    both = np.concatenate([dm.scalar_free(), dm.scalar_constrained()])
    np.testing.assert_array_equal(np.sort(both), np.arange(dm.n_scalar_full))
    vboth = np.concatenate([dm.vector_free(), dm.vector_constrained()])
    np.testing.assert_array_equal(np.sort(vboth), np.arange(dm.n_vector_full))


@pytest.mark.parametrize("n,dim", [(0, 2), (-1, 2), (2.5, 2), (4, 1), (4, 4)])
def test_rejects_bad_input(n, dim):
    with pytest.raises(ValueError):
        build_mesh(n, dim)
