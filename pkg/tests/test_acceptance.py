"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line. Run with `pytest tests/test_acceptance.py -v -s`.

The heavyweight shared state (the toy overfit run) is computed once per
session and reused by the criteria that need it.
"""

import time

import numpy as np
import pytest
from scipy.stats import chisquare

from chromatix.colornet import ColorNet, NetConfig, colorize
from chromatix.correspondence import (
    MappingField,
    MatchConfig,
    brute_force_nnf,
    mean_field_cost,
    nnf,
)
from chromatix.encoder import EncoderConfig, GrayEncoder, train_classifier
from chromatix.fusion import fake_reference, similarity_maps
from chromatix.imagecolor import histogram_correlation, lab_to_rgb
from chromatix.numerics import AdamState, adam_step, gradcheck
from chromatix.retrieval import (
    DEFAULT_BETA,
    GLOBAL_TOP_N,
    build_index,
    load_index,
    local_score,
    pca_fit,
    recommend,
    save_index,
)
from chromatix.training import (
    ImageRecord,
    PairSamplerConfig,
    TrainConfig,
    TwoBranchTrainer,
    combined_loss,
    sample_pairs,
)
from chromatix.weights import load_weights, save_weights

from corpus import class_corpus, toy_pairs
from gradcheck_cases import CATALOG_CASES, case_for
from test_fusion import loop_similarity_oracle, random_field


def report(name, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"[{tag}] {name}{suffix}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# shared heavyweight fixtures

@pytest.fixture(scope="session")
def overfit_run():
    """8-pair toy corpus trained for 300 steps with a fixed seed."""
    gray = GrayEncoder.random_init(EncoderConfig.toy(class_count=4), seed=7)
    perc = GrayEncoder.random_init(
        EncoderConfig((8, 16, 32, 64, 64), in_channels=3, descriptor_dim=64,
                      class_count=0), seed=8)
    pairs = toy_pairs(n=8, size=32, seed=42)
    cfg = TrainConfig(batch_size=8, epochs=300, lr=2e-3, seed=0,
                      decay_epochs=1000, role_switch_prob=0.5)
    match = MatchConfig(seed=5)
    t0 = time.time()
    trainer = TwoBranchTrainer(pairs, gray, perc, cfg, match)
    net, history = trainer.train()
    elapsed = time.time() - t0
    return dict(net=net, history=history, pairs=pairs, gray=gray, perc=perc,
                cfg=cfg, match=match, elapsed=elapsed, trainer=trainer)


@pytest.fixture(scope="session")
def retrieval_corpus():
    """30 images over 5 classes plus a trained toy classifier encoder."""
    samples = class_corpus(classes=5, per_class=6, size=32, seed=9)
    encoder, _ = train_classifier([(img.L, cls) for img, cls in samples],
                                  EncoderConfig.toy(class_count=5),
                                  steps=150, lr=2e-3, batch_size=8, seed=5)
    sources = [(f"img{i:02d}", lab_to_rgb(img)) for i, (img, _) in
               enumerate(samples)]
    index, rep = build_index(sources, encoder, grid=16)
    assert not rep.skipped
    return samples, encoder, index


# ---------------------------------------------------------------------------
# criteria

def test_differentiation_catalog():
    """Every op: finite-difference check at f64, 20 random shapes each,
    max relative error < 1e-4, under 60 s."""
    t0 = time.time()
    worst = 0.0
    for kind in sorted(CATALOG_CASES):
        rng = np.random.default_rng(abs(hash(kind)) % 2**31)
        for _ in range(20):
            build, arrays = case_for(kind, rng)
            err = gradcheck(build, arrays)
            worst = max(worst, err)
            assert err < 1e-4, f"{kind}: rel err {err:.2e}"
    elapsed = time.time() - t0
    report("differentiation: catalog vs finite differences",
           worst < 1e-4 and elapsed < 60.0,
           f"max rel err {worst:.2e}, {len(CATALOG_CASES)} ops x 20 shapes "
           f"in {elapsed:.1f}s")


def test_similarity_map_oracle():
    """Similarity maps match the loop oracle to 1e-6 on random 4x4
    two-level fixtures; self-match planes are identically 1."""
    rng = np.random.default_rng(1)
    max_err = 0.0
    for _ in range(10):
        ft = [rng.standard_normal((3, 4, 4)).astype(np.float32)
              for _ in range(2)]
        fr = [rng.standard_normal((3, 4, 4)).astype(np.float32)
              for _ in range(2)]
        phi_tr = random_field(rng, (4, 4), (4, 4))
        phi_rt = random_field(rng, (4, 4), (4, 4))
        sims = similarity_maps(ft + ft + ft[:1], fr + fr + fr[:1],
                               phi_tr, phi_rt)
        oracle = loop_similarity_oracle(ft + ft + ft[:1], fr + fr + fr[:1],
                                        phi_tr, phi_rt)
        max_err = max(max_err, float(np.abs(sims.planes - oracle).max()))
    levels = [rng.standard_normal((3, 5, 5)).astype(np.float32) + 0.3
              for _ in range(5)]
    ident = MappingField.identity(5, 5)
    self_sims = similarity_maps(levels, [lv.copy() for lv in levels],
                                ident, ident)
    self_dev = float(np.abs(self_sims.planes - 1.0).max())
    report("similarity maps: loop oracle and self-match",
           max_err <= 1e-6 and self_dev <= 1e-6,
           f"oracle err {max_err:.2e}, self-match dev {self_dev:.2e}")


def test_fake_reference_oracle():
    """Identity fields reproduce the chrominance bit-exactly; random
    fields match a per-pixel loop oracle exactly."""
    rng = np.random.default_rng(2)
    t_ab = rng.standard_normal((2, 6, 6)).astype(np.float32)
    ident = MappingField.identity(6, 6)
    bit_exact = fake_reference(t_ab, ident, ident).tobytes() == t_ab.tobytes()
    exact = True
    for _ in range(10):
        t_ab = rng.standard_normal((2, 5, 7)).astype(np.float32)
        phi_tr = random_field(rng, (5, 7), (6, 4))
        phi_rt = random_field(rng, (6, 4), (5, 7))
        out = fake_reference(t_ab, phi_tr, phi_rt)
        for y in range(5):
            for x in range(7):
                qx, qy = phi_tr.map[y, x]
                rx, ry = phi_rt.map[qy, qx]
                if not np.array_equal(out[:, y, x], t_ab[:, ry, rx]):
                    exact = False
    report("fake reference: identity bit-exact, random-field oracle exact",
           bit_exact and exact)


def test_patchmatch_optimality_gap():
    """20 random 8x8 single-level problems: mean cost within 5% of the
    brute-force optimum; per-iteration totals never increase."""
    rng = np.random.default_rng(3)
    gaps = []
    monotone = True
    for i in range(20):
        a = rng.standard_normal((4, 8, 8)).astype(np.float32)
        b = rng.standard_normal((4, 8, 8)).astype(np.float32)
        trace = []
        field = nnf([a], [b], MatchConfig(levels=1, seed=i, iterations=20),
                    cost_trace=trace)
        for level_trace in trace:
            if any(later > earlier + 1e-9 for earlier, later in
                   zip(level_trace, level_trace[1:])):
                monotone = False
        cost = mean_field_cost([a], [b], field)
        best = mean_field_cost([a], [b], brute_force_nnf(a, b))
        gaps.append(cost / max(best, 1e-12))
    mean_gap = float(np.mean(gaps))
    report("patchmatch: optimality gap vs brute force",
           mean_gap <= 1.05 and monotone,
           f"mean gap {mean_gap:.4f}, iterations monotone: {monotone}")


def test_pca_oracle():
    """Fitted subspace within 1e-6 principal angle of the SVD oracle on
    50x16 data; full-rank reconstruction error < 1e-5."""
    from scipy.linalg import subspace_angles

    rng = np.random.default_rng(4)
    x = rng.standard_normal((50, 16))
    model = pca_fit(x, 6)
    _, _, vt = np.linalg.svd(x - x.mean(axis=0), full_matrices=False)
    angle = float(np.max(subspace_angles(model.components.T.astype(np.float64),
                                         vt[:6].T)))
    full = pca_fit(x, 16)
    recon = full.back_project(full.project(x))
    rec_err = float(np.abs(recon - x).max())
    report("pca: svd-oracle subspace and full-rank reconstruction",
           angle < 1e-6 and rec_err < 1e-5,
           f"max principal angle {angle:.2e}, reconstruction err {rec_err:.2e}")


def test_local_ranking_oracle(retrieval_corpus):
    """Hand-computed two-cell score to 1e-9; the default weighting
    constant; the query's duplicate wins end-to-end on 30 images."""
    q_cells = np.array([[1.0, 0.0], [0.0, 1.0]])
    c_cells = np.array([[3.0, 0.0], [1.0, 1.0]])
    q_hists = np.array([[1, 2, 3, 4], [4, 3, 2, 1]], dtype=np.uint32)
    c_hists = np.array([[2, 4, 6, 8], [1, 2, 3, 4]], dtype=np.uint32)
    expected = (1.0 + 0.25 * 1.0) + (1.0 / np.sqrt(2.0) - 0.25)
    got = local_score(q_cells, q_hists, c_cells, c_hists, beta=0.25)
    fixture_ok = abs(got - expected) < 1e-9

    beta_ok = DEFAULT_BETA == 0.25 and GLOBAL_TOP_N == 200

    samples, encoder, index = retrieval_corpus
    self_first = True
    for probe in (0, 11, 23, 29):
        top = recommend(samples[probe][0].L, index, encoder, k=1)
        if top[0][0] != index.entries[probe].id:
            self_first = False
    report("local ranking: hand fixture, defaults, self-duplicate first",
           fixture_ok and beta_ok and self_first,
           f"fixture err {abs(got - expected):.2e}, beta={DEFAULT_BETA}, "
           f"top-n={GLOBAL_TOP_N}, self-first={self_first}")


def test_two_branch_training(overfit_run):
    """Combined objective falls below 1% of its initial value within 300
    steps; alpha=0 zeroes the perceptual-branch gradients; the batch
    split is exactly half and half."""
    run = overfit_run
    hist = run["history"]
    alpha = run["cfg"].alpha
    first = combined_loss(hist[0][1], hist[0][2], alpha)
    last = combined_loss(hist[-1][1], hist[-1][2], alpha)
    ratio = last / first
    converged = ratio < 0.01 and len(hist) <= 300

    zero_cfg = TrainConfig(alpha=0.0, batch_size=2, epochs=1, seed=4,
                           role_switch_prob=0.0)
    zero_tr = TwoBranchTrainer(run["pairs"][:2], run["gray"], run["perc"],
                               zero_cfg, run["match"])
    grads, raw = zero_tr.perceptual_gradients([(0, False), (1, False)])
    alpha_zero_ok = raw > 0 and all(np.all(g == 0.0) for g in grads.values())
    before = {k: v.copy() for k, v in zero_tr.net.tensors.items()}
    adam_step({k: zero_tr.net.tensors[k] for k in grads}, grads,
              AdamState(lr=0.1))
    unchanged = all(np.array_equal(zero_tr.net.tensors[k], before[k])
                    for k in grads)

    split_ok = run["cfg"].batch_size % 2 == 0 and \
        run["cfg"].batch_size // 2 * 2 == run["cfg"].batch_size
    try:
        TrainConfig(batch_size=7)
        split_ok = False
    except Exception:
        pass
    report("two-branch training: overfit, alpha gating, 50/50 split",
           converged and alpha_zero_ok and unchanged and split_ok,
           f"loss ratio {ratio:.5f} after {len(hist)} steps "
           f"({run['elapsed']:.0f}s), alpha-zero grads zero: {alpha_zero_ok}")


def test_self_reference_colorization(overfit_run):
    """Colorizing a training target with its own color original stays
    within 10 ab units of the ground truth on average."""
    run = overfit_run
    errs = []
    for t, _ in run["pairs"]:
        out = colorize(t.L, t, run["gray"], run["net"], run["match"])
        errs.append(float(np.mean(np.abs(out.ab - t.ab))))
    worst = max(errs)
    mean = float(np.mean(errs))
    report("self-reference colorization error",
           all(e < 10.0 for e in errs),
           f"mean |ab error| {mean:.2f}, worst image {worst:.2f} (limit 10)")


def test_pipeline_determinism(overfit_run, tmp_path):
    """Seeded colorize runs are bit-identical; weight and index files
    round-trip bit-exactly."""
    run = overfit_run
    t, r = run["pairs"][0]
    a = colorize(t.L, r, run["gray"], run["net"], run["match"])
    b = colorize(t.L, r, run["gray"], run["net"], run["match"])
    colorize_ok = a.a.tobytes() == b.a.tobytes() and \
        a.b.tobytes() == b.b.tobytes() and a.L.tobytes() == b.L.tobytes()

    w1 = tmp_path / "w1.cwts"
    w2 = tmp_path / "w2.cwts"
    run["net"].save(w1)
    save_weights(w2, load_weights(w1))
    weights_ok = w1.read_bytes() == w2.read_bytes()

    samples = class_corpus(classes=2, per_class=3, size=32, seed=3)
    enc = GrayEncoder.random_init(EncoderConfig.toy(class_count=2), seed=1)
    index, _ = build_index(
        [(f"i{i}", lab_to_rgb(img)) for i, (img, _) in enumerate(samples)],
        enc)
    p1 = tmp_path / "i1.cidx"
    p2 = tmp_path / "i2.cidx"
    save_index(index, p1)
    save_index(load_index(p1), p2)
    index_ok = p1.read_bytes() == p2.read_bytes()
    report("pipeline determinism and file round-trips",
           colorize_ok and weights_ok and index_ok,
           f"colorize bit-identical: {colorize_ok}, weights: {weights_ok}, "
           f"index: {index_ok}")


def test_sampler_proportions():
    """10,000 sampled pairs match the 45/45/10 strata by chi-square at
    p > 0.01."""
    records = []
    for cls in range(4):
        for i in range(4):
            rid = f"c{cls}_{i}"
            records.append(ImageRecord(rid, cls, top5=tuple(
                f"c{cls}_{j}" for j in range(4) if j != i)))
    cfg = PairSamplerConfig(category_map={0: "x", 1: "x", 2: "y", 3: "y"})
    rep = sample_pairs(records, cfg, 10_000, seed=7)
    observed = [rep.counts[s] for s in
                ("top5", "same_class", "cross_class_same_category")]
    expected = [4500, 4500, 1000]
    stat, p = chisquare(observed, f_exp=expected)
    report("pair sampler proportions (chi-square)",
           p > 0.01 and sum(observed) == 10_000,
           f"counts {observed}, chi2 p={p:.4f}")
