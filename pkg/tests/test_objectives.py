import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from srlopt.config import LB, UB, BodyParams, SRLLayout
from srlopt.kinematics import (DecisionVector, build_srl_lower, build_srl_upper, planar_ik,
                               reduced_workspace, sample_workspace)
from srlopt.objectives import (
    BIG, N_OBJECTIVES, SINGULAR_TOL, ReferenceFront, SRLProblem, distance_vector, estimate_reference_front,
    eval_similarity_block, f5, f5_from_force, front_candidates, igd, link_masses,
    moment_of_inertia, relative_mass, sts_poses, sts_support_force,
)

from conftest import REPORTED_X, PROTOTYPE_LENGTHS
from oracles import screw_matrix

decision = st.tuples(*[st.floats(lo, hi) for lo, hi in zip(LB, UB)]).map(np.array)


@pytest.fixture(scope="module")
def small_problem(body):
    return SRLProblem(body, n=600, seed=1)


# --- STS support force ------------------------------------------------------------

def sts_oracle(x, cfg: BodyParams):
    """Force bound from the 3-D chain: numpy IK, joint positions by screw
    matrices, lever = horizontal joint-to-tip distance."""
    l1, l2, l3, l4, c = x
    lay = cfg.layout
    lim = lay.joint_limits
    tau = cfg.torque_limits
    per_pose = []
    for fwd, height in sts_poses(cfg):
        mount = np.array([lay.mount[0], fwd, height])
        pts = [mount + np.array([0, 0, -s]) for s in np.cumsum([0, l1, l2, l3])]
        reachable, *branches = planar_ik(l2, l3 + l4, c - fwd, -(height - l1))
        best, regular, singular = 0.0, False, False
        for th2, psi in branches:
            th2, psi = float(th2), float(psi)
            if not reachable:
                continue
            if not (lim[1][0] - 1e-12 <= th2 <= lim[1][1] + 1e-12
                    and lim[2][0] - 1e-12 <= psi <= lim[2][1] + 1e-12):
                continue
            if abs(math.sin(psi)) < SINGULAR_TOL:
                singular = True
                continue
            regular = True
            q = [0.0, th2, psi, 0.0]
            T = np.eye(4)
            joints = []
            for k in range(4):
                joints.append((T @ np.r_[pts[k], 1])[:3])
                T = T @ screw_matrix((1, 0, 0) if k else (0, 0, 1), pts[k], q[k])
            tip = (T @ np.r_[mount + np.array([0, 0, -(l1 + l2 + l3 + l4)]), 1])[:3]
            assert tip[1] == pytest.approx(c, abs=1e-9) and tip[2] == pytest.approx(0, abs=1e-9)
            levers = [abs(tip[1] - joints[k][1]) for k in (1, 2, 3)]
            f = min(t / r if r > 0 else math.inf for t, r in zip(tau[1:], levers))
            best = max(best, f)
        if singular and not regular:
            continue
        per_pose.append(best)
    return min(per_pose) if per_pose else 0.0


def test_sts_matches_chain_oracle(body):
    rng = np.random.default_rng(11)
    xs = [REPORTED_X] + [rng.uniform(LB, UB) for _ in range(60)]
    for x in xs:
        assert sts_support_force(x, body) == pytest.approx(sts_oracle(x, body), rel=1e-9, abs=1e-12)


def test_sts_zero_torque(body):
    cfg = dataclasses.replace(body, torque_limits=(0.0, 0.0, 0.0, 0.0))
    assert sts_support_force(REPORTED_X, cfg) == 0.0
    assert f5(REPORTED_X, cfg) == BIG


def test_sts_linear_in_torque(body):
    cfg2 = dataclasses.replace(body, torque_limits=tuple(2 * t for t in body.torque_limits))
    f = sts_support_force(REPORTED_X, body)
    assert f > 0
    assert sts_support_force(REPORTED_X, cfg2) == pytest.approx(2 * f, rel=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_sts_scan_interior_maximum(body, k):
    grid = np.linspace(0.1, 0.6, 101)
    F = []
    for v in grid:
        x = np.r_[PROTOTYPE_LENGTHS, REPORTED_X[4]]
        x[k] = v
        F.append(sts_support_force(x, body))
    i = int(np.argmax(F))
    assert 0 < i < len(grid) - 1 and F[i] > max(F[0], F[-1])


@given(decision, st.floats(1.0, 3.0))
def test_f5_non_increasing_in_torque(x, s):
    body = BodyParams()
    more = dataclasses.replace(body, torque_limits=tuple(s * t for t in body.torque_limits))
    assert f5(x, more) <= f5(x, body)


def test_f5_examples():
    assert f5_from_force(100.0, 100.0) == 1.0
    assert f5_from_force(0.0, 100.0) == BIG
    assert f5_from_force(300.0, 100.0) == pytest.approx(1 / 3)


def test_singular_pose_flagged(body):
    # a fully stretched leg is the only way to reach the floor at the stand pose
    x = np.array([0.1, 0.4, 0.3, 0.15, 0.0])
    d = sts_support_force(x, body, detail=True)
    assert d.singular_poses
    assert d.force == pytest.approx(d.pose_forces[
        [i for i in range(len(d.pose_forces)) if i not in d.singular_poses]].min())


# --- mass and inertia -----------------------------------------------------------

def test_link_masses_prototype():
    np.testing.assert_allclose(link_masses(PROTOTYPE_LENGTHS, 0.208) * 1e3,
                               [20.8, 83.3, 62.5, 41.6], rtol=0.01)


def test_relative_mass_examples(body):
    assert relative_mass((0.2, 0.3, 0.2, 0.2, 0), body) == pytest.approx(0, abs=1e-15)
    assert relative_mass((0.1, 0.4, 0.3, 0.2, 0), body) == pytest.approx(0.0208, abs=1e-12)


@given(decision, st.floats(-0.05, 0.05))
def test_relative_mass_linear_off_plane(x, t):
    body = BodyParams()
    x = x.copy()
    x[:4] += (body.L0 - x[:4].sum()) / 4  # onto the hyperplane
    assert relative_mass(x, body) == pytest.approx(0, abs=1e-12)
    y = x.copy()
    y[:4] += t / 4
    assert relative_mass(y, body) == pytest.approx(body.rho_lin * abs(t), abs=1e-12)


def test_inertia_examples():
    zero = BodyParams(module_masses=(0, 0, 0, 0))
    assert moment_of_inertia((0.1, 0.4, 0.3, 0.2, 0), zero) == 0
    single = BodyParams(module_masses=(1, 0, 0, 0))
    assert moment_of_inertia((1.0, 0.4, 0.3, 0.2, 0), single) == pytest.approx(1.0)
    listed = BodyParams(module_masses=(0.521, 1.0, 0.521, 0.3))
    assert moment_of_inertia((0.1, 0.4, 0.3, 0.2, 0), listed) == pytest.approx(0.8888, abs=1e-3)


@given(decision, st.integers(0, 3), st.floats(1e-4, 0.1))
def test_inertia_increasing(x, k, dl):
    body = BodyParams()
    y = x.copy()
    y[k] += dl
    assert moment_of_inertia(y, body) > moment_of_inertia(x, body)


# --- distance and I_GD ----------------------------------------------------------

def test_igd_examples():
    assert igd(np.zeros(11)) == 0
    assert igd([3.0, 4.0]) == 2.5
    assert igd(np.ones(11)) == pytest.approx(math.sqrt(11) / 11)
    with pytest.raises(ValueError):
        igd([1.0], p=0.5)


def test_distance_vector_examples():
    v = np.arange(11.0)
    np.testing.assert_array_equal(distance_vector(v, v), 0)
    np.testing.assert_array_equal(distance_vector(v, np.zeros(11)), v)


@given(st.lists(st.floats(-10, 10), min_size=11, max_size=11),
       st.lists(st.floats(-10, 10), min_size=11, max_size=11), st.permutations(range(11)))
def test_distance_and_igd_properties(v, pf, perm):
    D = distance_vector(np.array(v), np.array(pf))
    assert np.all(D >= 0)
    phi = igd(D)
    assert phi >= 0 and (phi == 0) == bool(np.all(D == 0))
    Dp = distance_vector(np.array(v)[perm], np.array(pf)[perm])
    assert igd(Dp) == pytest.approx(phi)


# --- similarity block -------------------------------------------------------------

def test_common_random_numbers_match_direct_sampling(body, small_problem):
    x = REPORTED_X
    up = sample_workspace(build_srl_upper(x, body), 600, 1).points
    np.testing.assert_allclose(small_problem.upper_cloud(x), up, atol=1e-12)
    low = reduced_workspace(build_srl_lower(x, body), body.ground_offset, 600, 1, body).points
    np.testing.assert_allclose(small_problem.lower_cloud(x), low, atol=1e-12)


@pytest.mark.parametrize("mode", ["upper", "lower"])
def test_self_similarity(body, small_problem, mode):
    ref = small_problem.fit_upper(REPORTED_X) if mode == "upper" else small_problem.fit_lower(REPORTED_X)
    f = small_problem.similarity_block(REPORTED_X, mode, reference=ref)
    np.testing.assert_allclose(f, [0, 0, 0, 1], atol=1e-12)


@pytest.mark.parametrize("mode", ["upper", "lower"])
def test_reported_solution_similarity_finite(body, mode):
    f = eval_similarity_block(REPORTED_X, mode, body, n=10000)
    assert np.all(np.isfinite(f)) and 0 <= f[1] <= 1 and f[3] > 0
    assert eval_similarity_block(REPORTED_X, mode, body, n=10000) == f


@pytest.mark.xfail(strict=True, reason="a 100-point MVEE undershoots the 10000-point one "
                                        "by more than 10% on the upper-mode metrics")
def test_similarity_sampling_stability(body):
    for mode in ("upper", "lower"):
        a = np.array(eval_similarity_block(REPORTED_X, mode, body, n=10000))
        b = np.array(eval_similarity_block(REPORTED_X, mode, body, n=100))
        np.testing.assert_allclose(b, a, rtol=0.10)


def test_similarity_rejects_bad_input(body):
    with pytest.raises(ValueError):
        eval_similarity_block(REPORTED_X, "sideways", body, n=200)
    with pytest.raises(ValueError):
        eval_similarity_block((0.01, 0.4, 0.3, 0.2, 0), "upper", body, n=200)


def test_argmin_stable_under_repeat(body):
    xs = front_candidates(6, 3)
    a = [eval_similarity_block(x, "upper", body, n=500)[0] for x in xs]
    b = [eval_similarity_block(x, "upper", body, n=500)[0] for x in xs]
    assert a == b and int(np.argmin(a)) == int(np.argmin(b))


def test_empty_lower_workspace_scores_big(body):
    cfg = dataclasses.replace(body, ground_offset=5.0)
    vals, flags = SRLProblem(cfg, n=300).objectives(REPORTED_X)
    assert "empty_lower_workspace" in flags
    np.testing.assert_array_equal(vals[4:8], BIG)
    assert np.all(np.isfinite(vals))


# --- reference front ------------------------------------------------------------------

def test_front_single_point(small_problem):
    x0 = front_candidates(1, 0)
    front = estimate_reference_front(small_problem, 1, 0, candidates=x0)
    np.testing.assert_allclose(front.pf, small_problem.objectives(x0[0])[0])
    phi, _ = small_problem.with_front(front).evaluate(x0)
    assert phi[0] == 0


def test_front_monotone_in_budget(small_problem):
    a = estimate_reference_front(small_problem, 8, 0)
    b = estimate_reference_front(small_problem, 16, 0)
    assert np.all(b.pf <= a.pf)


def test_front_cache_round_trip(small_problem, tmp_path):
    a = estimate_reference_front(small_problem, 5, 2, cache_dir=tmp_path)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    b = estimate_reference_front(small_problem, 5, 2, cache_dir=tmp_path)
    np.testing.assert_array_equal(a.pf, b.pf)
    assert a.to_dict() == b.to_dict() == ReferenceFront.from_dict(a.to_dict()).to_dict()


def test_reference_front_validation():
    with pytest.raises(ValueError):
        ReferenceFront(np.ones(3))
    with pytest.raises(ValueError):
        ReferenceFront(np.full(N_OBJECTIVES, np.nan))


def test_evaluate_requires_front_and_is_thread_invariant(body, small_problem):
    with pytest.raises(RuntimeError):
        small_problem.evaluate(REPORTED_X)
    front = ReferenceFront(np.zeros(N_OBJECTIVES))
    X = front_candidates(6, 1)
    p1, F1 = small_problem.with_front(front).evaluate(X)
    multi = SRLProblem(body, n=600, seed=1, front=front, threads=3)
    p3, F3 = multi.evaluate(X)
    assert p1.tobytes() == p3.tobytes() and F1.tobytes() == F3.tobytes()


def test_profile_consistent(small_problem):
    front = ReferenceFront(np.zeros(N_OBJECTIVES))
    prob = small_problem.with_front(front)
    prof = prob.profile(REPORTED_X)
    phi, F = prob.evaluate(REPORTED_X)
    np.testing.assert_array_equal(prof.values, F[0])
    assert prof.phi == phi[0]
    assert set(prof.to_dict()) == {"objectives", "D", "phi", "flags"}
