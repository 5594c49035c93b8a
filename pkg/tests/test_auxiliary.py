import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from combustion.auxiliary import (active_set, alpha_samples, aux_front, coupling_check,
                                  estimate_alpha, nu)
from combustion.core import ModelParams
from combustion.estimators import autocorr
from combustion.paths import Censored, Label, path_for


def L(*pairs):
    return [Label(x, i) for x, i in pairs]


def test_active_set_at_origin():
    assert active_set(0, 0, ModelParams(2, 4)) == L((0, 1))


def test_active_set_keeps_M_largest():
    assert active_set(0, 5, ModelParams(2, 4)) == L((2, 1), (3, 1), (4, 1), (5, 1))


def test_active_set_with_two_indices_per_site():
    got = active_set(0, 2, ModelParams(3, 5))
    assert got == L((0, 2), (1, 1), (1, 2), (2, 1), (2, 2))


def test_active_set_rejects_z_below_r():
    with pytest.raises(ValueError):
        active_set(3, 2, ModelParams(2, 4))


@settings(max_examples=50, deadline=None)
@given(r=st.integers(-20, 20), k=st.integers(0, 30), a=st.integers(2, 5), extra=st.integers(0, 6))
def test_active_set_properties(r, k, a, extra):
    p = ModelParams(a, a + extra)
    s = active_set(r, r + k, p)
    assert s == sorted(s)
    assert len(s) == min(p.M, (k + 1) * (a - 1))
    assert all(r <= lab.birth_site <= r + k and 1 <= lab.index <= a - 1 for lab in s)


def _nu_reference(k, r, p, horizon):
    """Smallest unshifted hitting time of r + k among the active labels."""
    times = [path_for(p.seed, lab).hitting_time(r + k, horizon)
             for lab in active_set(r, r + k - 1, p)]
    finite = [t for t in times if not isinstance(t, Censored)]
    return min(finite) if finite else Censored(horizon)


def test_nu_first_level_is_single_walk_hit():
    p = ModelParams(2, 10, 0)
    hold, step = path_for(0, (0, 1)).events(1)[0]
    assert step == +1  # this seed's first step of (0, 1) goes right
    assert nu(1, 0, p, 100.0) == pytest.approx(hold)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), k=st.integers(1, 25), r=st.integers(-10, 10),
       a=st.integers(2, 4))
def test_nu_matches_reference(seed, k, r, a):
    p = ModelParams(a, 6, seed)
    got = nu(k, r, p, 40.0)
    want = _nu_reference(k, r, p, 40.0)
    if isinstance(want, Censored):
        assert got == want
    else:
        assert got == pytest.approx(want, rel=1e-12)


def test_nu_rejects_level_zero():
    with pytest.raises(ValueError):
        nu(0, 0, ModelParams(), 1.0)


def test_aux_front_steps():
    p = ModelParams(2, 10, 4)
    run = aux_front(0, p, 200.0)
    first = run.nus[0]
    assert run(first * (1 - 1e-9)) == 0
    assert run(first) == 1
    assert run.nus[0] == pytest.approx(nu(1, 0, p, 200.0))
    fronts = [run(t) for t in np.linspace(0, 200, 400)]
    assert np.all(np.diff(fronts) >= 0)
    assert run.step_times[-1] <= 200.0


def test_aux_front_translation_invariance_per_level():
    p = ModelParams(2, 10, 6)
    nus = aux_front(3, p, 100.0).nus
    for k in range(1, min(6, len(nus)) + 1):
        assert nus[k - 1] == pytest.approx(nu(k, 3, p, 100.0))


@pytest.mark.parametrize("a,M", [(2, 3), (2, 5), (3, 6), (4, 10), (9, 10)])
def test_alpha_positive(a, M):
    assert estimate_alpha(ModelParams(a, M, 2), 200.0, 20).alpha_hat > 0


def test_alpha_independent_of_origin():
    p = ModelParams(2, 10, 8)
    e0 = estimate_alpha(p, 2000.0, 100)
    e7 = estimate_alpha(p, 2000.0, 100, origin=7, first_replica=100)
    assert abs(e0.alpha_hat - e7.alpha_hat) <= 3 * math.hypot(e0.stderr, e7.stderr)


def test_alpha_reproducible_across_batches():
    p = ModelParams(2, 10, 9)
    e1 = estimate_alpha(p, 2000.0, 100)
    e2 = estimate_alpha(p, 2000.0, 100, first_replica=100)
    assert abs(e1.alpha_hat - e2.alpha_hat) <= 3 * math.hypot(e1.stderr, e2.stderr)


def test_alpha_needs_two_replicas():
    with pytest.raises(ValueError):
        estimate_alpha(ModelParams(), 10.0, 1)


def test_alpha_record_keys():
    rec = json.loads(estimate_alpha(ModelParams(2, 10, 1), 50.0, 4).to_json())
    assert set(rec) == {"a", "M", "horizon", "replicas", "alpha_hat", "stderr"}


@pytest.mark.xfail(strict=True, reason="level 1 waits for one walk to reach the next site; "
                   "about 2% of seeds have not moved by T=1000, inflating the spread")
def test_alpha_spread_below_ten_percent_at_T_1000():
    x = alpha_samples(ModelParams(2, 10, 1), 1000.0, 200)
    assert x.std(ddof=1) < 0.1 * x.mean()


def test_alpha_spread_outliers_are_first_level_stalls():
    p = ModelParams(2, 10, 1)
    x = alpha_samples(p, 1000.0, 200)
    stalled = x == 0
    assert x[~stalled].std(ddof=1) < 0.1 * x[~stalled].mean()
    assert stalled.sum() <= 10  # single-walk non-hit probability by T=1000 is about 0.018


def test_alpha_spread_at_T_10000():
    x = alpha_samples(ModelParams(2, 10, 1), 1e4, 200)
    assert x.std(ddof=1) < 0.1 * x.mean()


def test_waiting_times_decorrelate_beyond_label_overlap():
    p = ModelParams(2, 10, 21)
    nus = aux_front(0, p, 2e4).nus
    ell = p.M // p.a + 1
    for j in range(ell):
        seq = nus[p.M + j::ell]
        assert abs(autocorr(seq, 1)) <= 3 / math.sqrt(len(seq))


def test_coupling_holds_pathwise():
    for s in range(5):
        rep = coupling_check(ModelParams(2, 10, 100 + s), 300.0)
        assert rep.ok and rep.levels > 50
        assert rep.max_excess <= 1e-9


def test_coupling_holds_for_other_parameters():
    rep = coupling_check(ModelParams(3, 5, 7), 200.0)
    assert rep.ok
