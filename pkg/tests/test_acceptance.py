"""Acceptance criteria, each at its stated tolerance and time budget.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest
import torch

from hypee.analysis import (
    DEFAULT_TRAVERSAL_STEPS,
    curvature_estimate,
    delta_hyperbolicity,
    interpolate_path,
    lookahead,
    pairwise_distances,
)
from hypee.costs import CostModel, macs_saved_fraction, mixture_macs_saved
from hypee.entailment import ConeConfig
from hypee.errors import DataError
from hypee.experiments import ABLATION_DIMS, run_directional, run_latent_ablation
from hypee.geometry import (
    check_on_manifold,
    exp_map_origin,
    expmap0_space,
    geodesic_distance,
    lift,
    log_map_origin,
    manifold_residual,
    origin,
    tangent,
)
from hypee.model import BackboneConfig, LossConfig, build_model
from hypee.storage import (
    EmbeddingSet,
    decode_embeddings,
    encode_embeddings,
    load_checkpoint,
    read_embeddings,
    save_checkpoint,
    write_embeddings,
)
from hypee.training import model_grad_check
from hypee.trigger import calibrate_signals, decide_all, summarize

from test_analysis import four_point_delta
from test_trigger import _random_signals, straightline

GEOMETRY = "geometry suite"
GRADIENT = "gradient suite"
TABLE2 = "cost arithmetic"
TABLE3 = "curvature estimates"
DELTA = "delta-hyperbolicity oracle"
ALGO = "trigger oracle equivalence"
DIRECTIONAL = "directional synthetic comparison"
ABLATION = "latent-dimension ablation"
FORMATS = "file formats"
RETRIEVAL = "lookahead and traversal procedures"


def truncate1(x: float) -> float:
    """One decimal, truncated: the reporting convention of the cost table."""
    return math.floor(x * 10 + 1e-9) / 10


# ---------------------------------------------------------------------------
# Geometry: manifold residual 1e-6 (absolute for sqrt(c)|v| <= 10, relative to
# time**2 up to the lift limit), exp/log inverse 1e-7, metric axioms with
# 1e-8 slack on 1000 triples, unit-speed geodesics 1e-9; under 10 s.


@pytest.mark.acceptance(GEOMETRY)
def test_geometry_suite(detail):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = {"manifold": 0.0, "relative": 0.0, "inverse": 0.0, "triangle": 0.0, "speed": 0.0}
    for c in (0.25, 1.0, 4.0):
        u = rng.normal(size=(1000, 5))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        # absolute residual on the working range, relative one up to the lift limit
        V = tangent(torch.as_tensor(u * rng.uniform(0, 10, (1000, 1)) / math.sqrt(c)))
        H = exp_map_origin(V, c)
        worst["manifold"] = max(worst["manifold"], float(manifold_residual(H, c).max()))
        far = exp_map_origin(tangent(torch.as_tensor(u * rng.uniform(0, 31, (1000, 1)))), c)
        check_on_manifold(far, c, tol=1e-6)
        rel = manifold_residual(far, c) / far[..., 0].clamp_min(1.0) ** 2
        worst["relative"] = max(worst["relative"], float(rel.max()))
        worst["inverse"] = max(worst["inverse"], float((log_map_origin(H, c) - V).abs().max()))
        worst["inverse"] = max(worst["inverse"], float((exp_map_origin(log_map_origin(H, c), c) - H).abs().max() / H.abs().max()))

        X, Y, Z = (lift(torch.as_tensor(rng.normal(size=(1000, 4)) * 2), c) for _ in range(3))
        dxy, dyz, dxz = geodesic_distance(X, Y, c), geodesic_distance(Y, Z, c), geodesic_distance(X, Z, c)
        assert bool((dxy >= 0).all())
        assert float(geodesic_distance(X, X, c).abs().max()) <= 1e-8
        assert float((dxy - geodesic_distance(Y, X, c)).abs().max()) <= 1e-8
        worst["triangle"] = max(worst["triangle"], float((dxz - dxy - dyz).max()))

        u = rng.normal(size=(200, 4))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        s, t = rng.uniform(0, 4, (200, 1)), rng.uniform(0, 4, (200, 1))
        a, b = expmap0_space(torch.as_tensor(s * u), c), expmap0_space(torch.as_tensor(t * u), c)
        err = geodesic_distance(a, b, c) - torch.as_tensor(np.abs(s - t)[:, 0])
        worst["speed"] = max(worst["speed"], float(err.abs().max()))
    seconds = time.perf_counter() - start
    detail(
        f"manifold {worst['manifold']:.1e} (relative {worst['relative']:.1e}), inverse {worst['inverse']:.1e}, "
        f"triangle excess {max(worst['triangle'], 0):.1e}, speed {worst['speed']:.1e}, {seconds:.1f}s"
    )
    assert worst["manifold"] <= 1e-6
    assert worst["relative"] <= 1e-6
    assert worst["inverse"] <= 1e-7
    assert worst["triangle"] <= 1e-8
    assert worst["speed"] <= 1e-9
    assert seconds < 10


# ---------------------------------------------------------------------------
# Gradients of the full objective: 3 exits, n=4, C=3, 20 points, 1e-4; under 60 s.


@pytest.mark.acceptance(GRADIENT)
def test_gradient_suite(detail):
    start = time.perf_counter()
    cfg = BackboneConfig(4, (5, 5, 5), (0, 1, 2), 4, 3)
    rng = np.random.default_rng(7)
    checked, skipped, worst = 0, 0, 0.0
    seed = 0
    while checked < 20 and seed < 80:
        model = build_model(cfg, seed)
        X = rng.normal(size=(4, 4))
        y = torch.as_tensor(rng.integers(0, 3, 4))
        rep = model_grad_check(model, X, y, LossConfig(lam=0.5))
        seed += 1
        if rep.skipped:
            skipped += 1
            continue
        assert rep.ok, (seed - 1, rep.max_rel_error)
        worst = max(worst, rep.worst)
        checked += 1
    seconds = time.perf_counter() - start
    detail(f"{checked} points checked ({skipped} near a kink skipped), worst rel {worst:.1e}, {seconds:.1f}s")
    assert checked == 20
    assert worst <= 1e-4
    assert seconds < 60


# ---------------------------------------------------------------------------
# Cost table arithmetic, to the reported rounding.

REPORTED_COSTS = (13.08e3, 19.41e3, 34.9e3)


@pytest.mark.acceptance(TABLE2)
def test_per_exit_savings(detail):
    cost = CostModel(REPORTED_COSTS)
    saved = [100 * macs_saved_fraction(cost, i) for i in range(3)]
    detail(f"EE0 {truncate1(saved[0])}%, EE1 {truncate1(saved[1])}%")
    assert truncate1(saved[0]) == 62.5
    assert truncate1(saved[1]) == 44.3
    assert saved[2] == 0.0


@pytest.mark.acceptance(TABLE2)
@pytest.mark.parametrize("fractions, expected", [((30.1, 39.1, 30.9), 36.1), ((35.6, 36.7, 27.6), 38.5)])
def test_mixture_savings(fractions, expected, detail):
    cost = CostModel(REPORTED_COSTS)
    exact = [macs_saved_fraction(cost, i) for i in range(3)]
    displayed = [0.625, 0.443, 0.0]
    f = [x / 100 for x in fractions]
    from_exact = truncate1(100 * mixture_macs_saved(f, exact))
    from_displayed = truncate1(100 * mixture_macs_saved(f, displayed))
    detail(f"{fractions} -> {from_exact}%")
    assert from_exact == expected
    assert from_displayed == expected


# ---------------------------------------------------------------------------
# Curvature estimate reproduces all six rows within 1%.

REPORTED_CURVATURES = [(0.282, 0.26), (0.304, 0.223), (0.233, 0.379), (0.247, 0.338), (0.148, 0.94), (0.143, 1.012)]


@pytest.mark.acceptance(TABLE3)
def test_curvature_rows(detail):
    errs = [abs(curvature_estimate(d) - c) / c for d, c in REPORTED_CURVATURES]
    detail(f"worst relative error {max(errs):.2%}")
    assert max(errs) <= 0.01


# ---------------------------------------------------------------------------
# Cubic delta equals the quartic four-point brute force on <= 60 points;
# star trees give zero; under 30 s.


@pytest.mark.acceptance(DELTA)
def test_delta_oracle_equivalence(detail):
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for n, metric in ((20, "euclidean"), (40, "lorentz"), (60, "euclidean"), (60, "lorentz")):
        D = pairwise_distances(rng.normal(size=(n, 3)) * 1.5, metric)
        oracle = four_point_delta(D)
        got = delta_hyperbolicity(D, base_point=None).delta
        worst = max(worst, abs(got - oracle) / oracle)
        base0 = delta_hyperbolicity(D, base_point=0).delta
        assert base0 <= oracle + 1e-12 <= 2 * base0 + 1e-12
    for arms in ([1.0, 2.0, 3.0, 4.0], list(rng.uniform(0.1, 5, 30))):
        arms = np.asarray(arms)
        D = arms[:, None] + arms[None, :]
        np.fill_diagonal(D, 0.0)
        for base in (0, None):
            rep = delta_hyperbolicity(D, base_point=base)
            assert rep.delta == 0.0 and rep.delta_rel == 0.0
    seconds = time.perf_counter() - start
    detail(f"max relative gap to oracle {worst:.1e}, {seconds:.1f}s")
    assert worst <= 1e-12
    assert seconds < 30


# ---------------------------------------------------------------------------
# Gate decisions agree with a straightline transcription on 200 x 3; report
# fractions sum to 1; class-gated exits are a subset of global-gated exits.


@pytest.mark.acceptance(ALGO)
def test_trigger_oracle_equivalence(detail):
    cost = CostModel(REPORTED_COSTS)
    agreed = 0
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        ref, ref_y = _random_signals(rng, N=3, B=200)
        ev, ev_y = _random_signals(rng, N=3, B=200)
        stats = calibrate_signals(ref, ref_y)
        cls = decide_all(ev, "class", stats)
        glob = decide_all(ev, "global", stats)
        want = straightline(ev.norms.tolist(), ev.logits.tolist(), ev_y, ref.norms.tolist(), ref.logits.tolist(), ref_y.tolist())
        assert [(d.exit_taken, d.predicted_class) for d in cls] == want
        agreed += len(want)
        for dec in (cls, glob):
            rep = summarize(dec, ev_y, cost, "x")
            assert abs(sum(rep.triggered) - 1.0) <= 1e-9
        c_exit = np.array([d.exit_taken for d in cls])
        g_exit = np.array([d.exit_taken for d in glob])
        for i in range(2):
            assert set(np.flatnonzero(c_exit <= i)) <= set(np.flatnonzero(g_exit <= i))
    detail(f"{agreed} decisions identical")


# ---------------------------------------------------------------------------
# Directional comparison on synthetic hierarchical data: 3 exits, 12 classes,
# 3 seeds; under 10 minutes.


@pytest.fixture(scope="module")
def directional():
    return run_directional(seeds=(0, 1, 2))


@pytest.mark.acceptance(DIRECTIONAL)
def test_directional_runtime(directional, detail):
    detail(f"{directional.seconds:.0f}s for 3 seeds x 2 modes")
    print(directional.table())
    assert directional.seconds < 600


@pytest.mark.acceptance(DIRECTIONAL)
def test_directional_a_early_exit_accuracy(directional, detail):
    pairs = ", ".join(f"{o.hyp_accuracy[0]:.3f}/{o.euc_accuracy[0]:.3f}" for o in directional.outcomes)
    detail(f"(a) exit-0 hyp/euc {pairs}")
    assert directional.hyp_wins_early() >= 2


@pytest.mark.acceptance(DIRECTIONAL)
def test_directional_b_norm_ordering(directional, detail):
    detail("(b) norms " + " | ".join(" < ".join(f"{n:.1f}" for n in o.hyp_norms) for o in directional.outcomes))
    assert directional.norms_ordered()


@pytest.mark.acceptance(DIRECTIONAL)
def test_directional_c_trigger_vs_exit0(directional, detail):
    acc, base, saved = directional.trigger_accuracy(), directional.exit0_accuracy(), directional.trigger_savings()
    detail(f"(c) trigger acc {acc:.3f} vs exit-0 {base:.3f}, saved {100 * saved:.1f}%")
    assert acc >= base
    assert saved > 0


@pytest.mark.acceptance(DIRECTIONAL)
def test_directional_d_class_gate_precision(directional, detail):
    cls, glob = directional.early_gate_precision("class"), directional.early_gate_precision("global")
    detail(f"(d) early-gate correct class {100 * cls:.1f}% vs global {100 * glob:.1f}%")
    assert cls > glob


# ---------------------------------------------------------------------------
# Latent-dimension ablation over 8..128.


@pytest.mark.acceptance(ABLATION)
def test_latent_ablation(detail):
    res = run_latent_ablation()
    print(res.table())
    detail(f"{len(res.rows)} runs over n={list(ABLATION_DIMS)}, {res.seconds:.0f}s")
    assert sorted({r.latent_dim for r in res.rows}) == list(ABLATION_DIMS)
    assert {r.mode for r in res.rows} == {"hyperbolic", "euclidean"}
    assert all(len(r.accuracy) == 3 and all(0 <= a <= 1 for a in r.accuracy) for r in res.rows)
    assert res.costs_monotone()
    assert len(res.table().split("\n")) == 1 + len(res.rows)


# ---------------------------------------------------------------------------
# File formats: bitwise round trips and distinct corruption codes.


@pytest.mark.acceptance(FORMATS)
def test_embedding_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for count, mode in ((0, "hyperbolic"), (1000, "hyperbolic"), (1000, "euclidean")):
        es = EmbeddingSet(
            rng.normal(size=(count, 8)).astype(np.float32),
            rng.integers(0, 50, count).astype(np.uint32),
            rng.integers(0, 3, count).astype(np.uint32),
            0.5,
            mode,
        )
        path = tmp_path / f"{mode}{count}.hyee"
        write_embeddings(es, path)
        back = read_embeddings(path)
        assert back.space.tobytes() == es.space.tobytes()
        assert back.labels.tobytes() == es.labels.tobytes() and back.exit_ids.tobytes() == es.exit_ids.tobytes()
        assert encode_embeddings(back) == path.read_bytes()


@pytest.mark.acceptance(FORMATS)
def test_corruption_codes():
    blob = encode_embeddings(EmbeddingSet(np.ones((4, 2), dtype=np.float32), np.arange(4)))
    codes = {}
    for name, bad in (("magic", b"ABCD" + blob[4:]), ("truncated", blob[:-1]), ("version", blob[:4] + b"\x09\x00" + blob[6:])):
        with pytest.raises(DataError) as info:
            decode_embeddings(bad)
        codes[name] = info.value.code
    assert codes == {"magic": "bad_magic", "truncated": "truncated", "version": "version_mismatch"}


@pytest.mark.acceptance(FORMATS)
def test_checkpoint_round_trip(tmp_path):
    for mode in ("hyperbolic", "euclidean"):
        model = build_model(BackboneConfig(6, (8, 8, 8), (0, 1, 2), 4, 5, mode, 0.7), seed=3)
        X = torch.as_tensor(np.random.default_rng(1).normal(size=(25, 6)))
        model.fit_input_scaling_(X.numpy() + 2)
        save_checkpoint(model, tmp_path / f"{mode}.npz", {"seed": 3}, 3)
        back, _ = load_checkpoint(tmp_path / f"{mode}.npz")
        with torch.no_grad():
            a, b = model(X), back(X)
        for u, v in zip(a.embeddings + a.logits, b.embeddings + b.logits):
            assert u.numpy().tobytes() == v.numpy().tobytes()


# ---------------------------------------------------------------------------
# Lookahead nesting in T; traversal endpoints, 50-step default, tangent-affine
# midpoint; precision at T=1.2 at least that at T=2.0 on the synthetic model.


@pytest.mark.acceptance(RETRIEVAL)
def test_lookahead_nesting():
    rng = np.random.default_rng(2)
    refs = EmbeddingSet(rng.normal(size=(500, 3)) * 2, rng.integers(0, 5, 500))
    for q in rng.normal(size=(10, 3)):
        query = lift(torch.as_tensor(q))
        sets = [set(lookahead(query, refs, T).indices.tolist()) for T in (0.5, 1.0, 1.2, 1.5, 2.0, 3.0)]
        assert all(a <= b for a, b in zip(sets, sets[1:]))


@pytest.mark.acceptance(RETRIEVAL)
def test_traversal_properties():
    assert DEFAULT_TRAVERSAL_STEPS == 50
    for c in (0.5, 1.0, 2.0):
        start = lift(torch.tensor([1.2, -0.4, 2.5], dtype=torch.float64), c)
        path = interpolate_path(start, c=c)
        assert len(path) == 50
        assert float((path[0] - start).abs().max()) <= 1e-9
        assert float((path[-1] - origin(3, c)).abs().max()) <= 1e-9
        odd = interpolate_path(start, 51, c=c)
        mid = log_map_origin(odd[25], c)
        assert float((mid - 0.5 * log_map_origin(start, c)).abs().max()) <= 1e-9


@pytest.mark.acceptance(RETRIEVAL)
def test_lookahead_precision_tight_vs_loose(directional, detail):
    tight, loose = directional.lookahead_precision((1.2, 2.0), reference_exit=1)
    detail(
        f"EE0->EE1 precision T=1.2 {tight.precision:.3f} ({tight.matched}/{tight.retrieved}), "
        f"T=2.0 {loose.precision:.3f} ({loose.matched}/{loose.retrieved}), coverage {tight.coverage:.1%}/{loose.coverage:.1%}"
    )
    assert tight.retrieved > 0
    assert tight.precision >= loose.precision
