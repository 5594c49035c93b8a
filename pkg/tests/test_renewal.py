import copy
import json
import math

import numpy as np
import pytest
from scipy import stats

from combustion import _aux
from combustion.auxiliary import AuxRun, aux_front
from combustion.core import ModelParams, Stop, init_canonical, run, step_coupled
from combustion.estimators import tail_fit
from combustion.paths import Censored
from combustion.renewal import (NoRegeneration, RegenRecord, RenewalParams, coupled_stream,
                                detect_U, detect_U_paths, detect_V, increments, records_jsonl,
                                regen_run, regeneration_scan)
from combustion.rng import replica_seed

AP = 0.35
P = RenewalParams(AP, 10, 50.0, 200.0)


# -- parameters ---------------------------------------------------------------

def test_renewal_params_validation():
    with pytest.raises(ValueError):
        RenewalParams(0.0, 10, 5.0)
    with pytest.raises(ValueError):
        RenewalParams(0.3, 0, 5.0)
    with pytest.raises(ValueError):
        RenewalParams(0.3, 1, 10.0, horizon=5.0)


def test_auto_defaults():
    p = RenewalParams.auto(0.7, 10)
    assert p.alpha_prime == pytest.approx(0.35)
    assert p.L == 10 and p.confirm_window == pytest.approx(200 / 0.7)
    with pytest.raises(ValueError):
        RenewalParams(0.8, 10, 5.0).check_against(0.7)


# -- U ------------------------------------------------------------------------

def test_U_fires_when_line_reaches_one():
    aux = AuxRun(origin=0, nus=np.array([3 / AP]), horizon=100.0)
    assert detect_U(aux, 0, P) == pytest.approx(1 / AP)


def test_U_censored_when_front_outruns_line():
    aux = AuxRun(origin=0, nus=np.full(200, 1 / (2 * AP)), horizon=200.0)
    assert isinstance(detect_U(aux, 0, P), Censored)


def test_U_needs_matching_origin():
    with pytest.raises(ValueError):
        detect_U(AuxRun(1, np.array([1.0]), 10.0), 0, P)


@pytest.mark.parametrize("seed", range(20))
def test_U_from_path_store_matches_aux_run(seed):
    params = ModelParams(2, 10, replica_seed(4, seed))
    r = 5
    p = RenewalParams(AP, 10, 100.0, 100.0)
    aux = aux_front(r, params, 100.0)
    want = detect_U(aux, r, p)
    got = detect_U_paths(params.seed, r, params, p)
    if isinstance(want, Censored):
        assert isinstance(got, Censored)
    else:
        assert got == pytest.approx(want)


# -- V ------------------------------------------------------------------------

def test_V_censored_without_older_labels():
    params = ModelParams(2, 10, 3)
    state = init_canonical(params, 1)
    assert isinstance(detect_V(coupled_stream(state, params.seed, params, 30.0), 0, P), Censored)


def test_V_immediate_for_older_label_at_r0():
    params = ModelParams(2, 10, 3)
    state = init_canonical(params, 3)  # labels born at -1 and -2 sit at 0
    assert detect_V(coupled_stream(state, params.seed, params, 30.0), 0, P) == 0.0


def _reference_vrel(params, horizon, window):
    """V after every front advance, recomputed from scratch on the labeled
    reference engine with the advancing label excluded."""
    state = init_canonical(params, 1)
    snaps = []
    while state._queue and state._queue[0][0] <= horizon:
        state, evs = step_coupled(state, params.seed, params.a, params.M)
        for e in evs:
            if e.kind == "front-advance":
                snaps.append((e.detail, e.subject, copy.deepcopy(state)))
    out = []
    p = RenewalParams(AP, 1, window, window)
    for y, jumper, snap in snaps:
        stream = coupled_stream(snap, params.seed, params, min(horizon, snap.time + window))
        v = detect_V(stream, y, p, exclude=[jumper])
        out.append(math.inf if isinstance(v, Censored) else v)
    return np.array(out)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_compiled_V_monitor_matches_reference(seed):
    params = ModelParams(2, 3, seed)
    horizon, window = 40.0, 15.0
    summary = run(params, 1, "coupled", Stop(horizon), alpha_prime=AP, monitor_window=window)
    want = _reference_vrel(params, horizon, window)
    got = summary.coupled["v_rel"][: len(want)]
    assert len(want) == summary.front
    np.testing.assert_allclose(got, want, rtol=1e-12)
    assert np.isfinite(want).sum() > 0


# -- scan ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def scans():
    p = RenewalParams(AP, 10, 280.0, 20000.0)
    out = []
    for j in range(6):
        params = ModelParams(2, 10, replica_seed(55, j))
        out.append(regen_run(params, p, p.horizon))
    return p, out


def test_scan_records_are_increasing(scans):
    p, out = scans
    total = 0
    for summary, scan in out:
        kap = [r.kappa for r in scan.records]
        rk = [r.r_at_kappa for r in scan.records]
        assert np.all(np.diff(kap) > 0) and np.all(np.diff(rk) >= p.L)
        assert all(summary.front_at(r.kappa) == r.r_at_kappa for r in scan.records)
        total += len(scan.records)
    assert total >= 30


def test_first_cycle_success_gives_kappa_at_T_L(scans):
    p, out = scans
    found = 0
    for summary, scan in out:
        first = scan.trials[0]
        if first.d > p.confirm_window:
            assert scan.records[0].kappa == summary.advance_times[p.L - 1]
            assert scan.records[0].k_index == 1
            found += 1
    assert found >= 1


def test_every_trial_before_a_record_failed_within_window(scans):
    p, out = scans
    for _, scan in out:
        confirmed = {r.kappa for r in scan.records}
        for tr in scan.trials:
            assert (tr.s in confirmed) == (tr.d > p.confirm_window)


def test_increments_rows(scans):
    _, out = scans
    for _, scan in out:
        inc = increments(scan.records)
        assert inc.shape == (max(0, len(scan.records) - 1), 2)
        assert np.all(inc[:, 0] > 0) and np.all(inc[:, 1] >= 10)


def test_increments_of_single_record_empty():
    rec = RegenRecord(1, 5.0, 10, 1, 100.0)
    assert increments([rec]).shape == (0, 2)


def test_U_and_V_detections_uncorrelated(scans):
    p, out = scans
    trials = [t for _, scan in out for t in scan.trials]
    u = np.array([t.u <= p.confirm_window for t in trials], dtype=float)
    v = np.array([t.v <= p.confirm_window for t in trials], dtype=float)
    assert abs(np.corrcoef(u, v)[0, 1]) <= 3 / math.sqrt(len(trials))


def test_cycle_count_is_geometric_like(scans):
    _, out = scans
    ks = np.array([r.k_index for _, scan in out for r in scan.records])
    delta = 1 / ks.mean()
    assert delta > 0
    # the discrete KS statistic is conservative, so this is a one-sided check
    assert stats.kstest(ks, stats.geom(delta).cdf).pvalue > 0.01


def test_revocations_reported(scans):
    _, out = scans
    revoked, checked = map(sum, zip(*(scan.revocations for _, scan in out)))
    assert checked > 0 and revoked <= checked


def test_scan_needs_coupled_run():
    s = run(ModelParams(2, 10, 1), 1, "fast", Stop(10.0))
    with pytest.raises(ValueError):
        regeneration_scan(s, P)


def test_scan_require_raises_without_records():
    params = ModelParams(2, 10, 1)
    p = RenewalParams(AP, 10, 50.0, 60.0)
    with pytest.raises(NoRegeneration):
        summary = run(params, 1, "coupled", Stop(60.0), alpha_prime=AP, monitor_window=100.0)
        regeneration_scan(summary, p, require=True)


def test_records_jsonl(scans):
    _, out = scans
    summary, scan = out[0]
    lines = records_jsonl(7, scan).splitlines()
    assert len(lines) == len(scan.records)
    rec = json.loads(lines[0])
    assert set(rec) == {"seed", "n", "kappa", "r_at_kappa", "k_index", "confirmed_window",
                        "revoked"}


def test_U_failure_tail_is_polynomially_light():
    """P[t < U < inf] decays at least like t^(-p/2 + 1/2) with p = min(4, M/2 - 1).

    Failures beyond a few hundred time units were never seen, so a window of
    1000 loses nothing; 22000 origins give about 10^4 finite samples.
    """
    params = ModelParams(2, 10, 77)
    p = RenewalParams(AP, 10, 1000.0, 1000.0)
    u = np.array([_aux.first_line_failure(np.uint64(params.seed), 1000 * j, 2, 10, AP, 1000.0)
                  for j in range(22000)])
    finite = u[np.isfinite(u)]
    assert len(finite) >= 10**4
    assert finite.max() < p.confirm_window / 2
    slope, _, _ = tail_fit(finite)
    assert slope <= -1.5
