"""PT-based entanglement witnesses and their truncation guard."""

import math

import numpy as np
import pytest

from qmaser.entangle import (
    EntanglementObserver,
    conditional_entropies,
    peres_test,
    pt_spectrum_stats,
    truncate_field,
)
from qmaser.evolve import IntegrationConfig, propagate
from qmaser.linalg import thermal_state
from qmaser.models import DampedJCMParams, embed_state


def bell_state(n_fock):
    """(|0,0> + |1,1>)/sqrt(2) for a two-level matter part."""
    psi = np.zeros(2 * n_fock, dtype=complex)
    psi[0] = psi[n_fock + 1] = 1.0 / math.sqrt(2)
    return np.outer(psi, psi.conj())


class TestWitnesses:
    def test_bell_conditional_entropies(self):
        rho = bell_state(2)
        s_m, s_f = conditional_entropies(rho, 2, 2)
        # pure entangled state: both conditional entropies are -ln 2
        assert np.isclose(s_m, -math.log(2))
        assert np.isclose(s_f, -math.log(2))

    def test_product_conditional_entropies(self):
        rho_m = np.diag([0.7, 0.3]).astype(complex)
        rho = np.kron(rho_m, thermal_state(0.5, 4))
        s_m, s_f = conditional_entropies(rho, 2, 4)
        # separable: S(m|f) = S_m >= 0 and S(f|m) = S_f >= 0
        assert np.isclose(s_m, -(0.7 * math.log(0.7) + 0.3 * math.log(0.3)))
        assert s_f > 0

    def test_bell_pt_spectrum(self):
        min_pt, neg_mass = pt_spectrum_stats(bell_state(2), 2, 2)
        assert np.isclose(min_pt, -0.5)
        assert np.isclose(neg_mass, -0.5)

    def test_product_pt_spectrum(self):
        rho = np.kron(np.diag([0.6, 0.4]).astype(complex),
                      thermal_state(0.3, 3))
        min_pt, neg_mass = pt_spectrum_stats(rho, 2, 3)
        assert min_pt > -1e-12
        assert neg_mass > -1e-12


class TestTruncateField:
    def test_renormalizes(self):
        rho = np.kron(np.diag([0.5, 0.5]).astype(complex),
                      thermal_state(1.0, 8))
        cut = truncate_field(rho, 2, 8, 4)
        assert cut.shape == (8, 8)
        assert np.isclose(np.trace(cut).real, 1.0)

    def test_exact_when_support_fits(self):
        rho = bell_state(6)  # field support is {0, 1}
        cut = truncate_field(rho, 2, 6, 3)
        assert np.allclose(cut, bell_state(3), atol=1e-15)

    def test_validates_cut(self):
        rho = bell_state(4)
        with pytest.raises(ValueError):
            truncate_field(rho, 2, 4, 4)
        with pytest.raises(ValueError):
            truncate_field(rho, 2, 4, 0)


class TestPeresTest:
    def test_requires_states(self):
        with pytest.raises(ValueError):
            peres_test([], 2)

    def test_single_entry_never_verified(self):
        rec = peres_test([(2, bell_state(2))], 2, time=1.5)
        assert rec.time == 1.5
        assert np.isclose(rec.min_pt_eigenvalue, -0.5)
        assert not rec.truncation_verified

    def test_verified_across_truncations(self):
        # the same physical state viewed at two cuts: eigenvalue persists
        small = bell_state(3)
        big = embed_state(small, 2, 3, 6)
        rec = peres_test([(6, big), (3, small)], 2)
        assert rec.truncation_verified
        assert np.isclose(rec.min_pt_eigenvalue, -0.5)

    def test_unsorted_input_accepted(self):
        small = bell_state(3)
        big = embed_state(small, 2, 3, 6)
        a = peres_test([(3, small), (6, big)], 2)
        b = peres_test([(6, big), (3, small)], 2)
        assert a.min_pt_eigenvalue == b.min_pt_eigenvalue

    def test_separable_state_not_verified(self):
        rho_m = np.diag([0.5, 0.5]).astype(complex)
        states = [(n, np.kron(rho_m, thermal_state(0.2, n))) for n in (3, 5)]
        rec = peres_test(states, 2)
        assert rec.min_pt_eigenvalue > -1e-12
        assert not rec.truncation_verified

    def test_drifting_eigenvalue_not_verified(self):
        # a state whose negativity is an artifact of the cut fails the guard
        rec_ok = peres_test([(2, bell_state(2)),
                             (4, embed_state(bell_state(2), 2, 2, 4))], 2)
        assert rec_ok.truncation_verified
        shallow = 0.5 * bell_state(4) + 0.5 * np.kron(
            np.diag([0.5, 0.5]).astype(complex), thermal_state(0.4, 4))
        deep = embed_state(bell_state(2), 2, 2, 4)
        rec_bad = peres_test([(2, bell_state(2)), (4, shallow),
                              (4, deep)], 2)
        assert not rec_bad.truncation_verified


@pytest.fixture(scope="module")
def rabi_run():
    """Lossless resonant exchange builds matter-field entanglement."""
    model = DampedJCMParams(gamma=0.0, n_th=0.0, lam=1.0, n_fock=4).build()
    rho0 = np.zeros((model.dim, model.dim), dtype=complex)
    rho0[model.n_fock, model.n_fock] = 1.0  # |e, 0>
    ob = EntanglementObserver(2, pt_t_max=1.0, probe_drop=1)
    cfg = IntegrationConfig(step_h=0.005, t_final=2.0, sample_stride=50,
                            occupancy_threshold=2.0)
    traj = propagate(rho0, model, cfg, observers=(ob,))
    return traj.tables["entanglement"]


class TestObserver:
    def test_entanglement_detected_mid_swap(self, rabi_run):
        cols = rabi_run["columns"]
        data = rabi_run["data"]
        times = rabi_run["times"]
        i = cols.index("min_pt_eig")
        # quarter-period of the vacuum Rabi cycle: maximally entangled
        mid = np.argmin(np.abs(times - 0.75))
        assert data[mid, i] < -0.4
        s_cond = data[mid, cols.index("S_cond_m")]
        assert s_cond < -0.5

    def test_probe_column_states_its_verdict(self, rabi_run):
        cols = rabi_run["columns"]
        data = rabi_run["data"]
        times = rabi_run["times"]
        v = data[:, cols.index("pt_verified")]
        active = times <= 1.0
        assert np.all(np.isin(v[active], [0.0, 1.0]))
        mid = np.argmin(np.abs(times - 0.75))
        assert v[mid] == 1.0

    def test_pt_columns_nan_after_cutoff(self, rabi_run):
        cols = rabi_run["columns"]
        data = rabi_run["data"]
        times = rabi_run["times"]
        late = times > 1.0
        assert late.any()
        for name in ("min_pt_eig", "pt_neg_mass", "pt_verified"):
            assert np.all(np.isnan(data[late, cols.index(name)]))
        # the cheap entropy witnesses keep running
        assert np.all(np.isfinite(data[:, cols.index("S_cond_m")]))
