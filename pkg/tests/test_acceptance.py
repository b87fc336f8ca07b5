"""Acceptance criteria, one test per criterion.

The suite is property-based plus directional reproduction of the
qualitative claims: exact statistical machinery is checked against
independent oracles, attack invariants are checked exhaustively, and the
headline orderings (masked attack vs bounded shadow baseline, targeted vs
untargeted, saliency-guided vs random masks) are reproduced on a
desk-scale benchmark trained in-session.

Each test prints one PASS line with its measured numbers; run with
``pytest -v -rA`` to see them all.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from certspoof._rng import make_rng
from certspoof.attacks import AttackConfig, ghostcert
from certspoof.datasets import synthetic_shapes
from certspoof.evaluation import (
    Defense,
    GridSpec,
    RecordStore,
    asr_targeted,
    asr_untargeted,
    outcome_counts,
    run_ablation,
    run_grid,
    select_eligible_images,
)
from certspoof.models import (
    Ensemble,
    LinearClassifier,
    TrainingConfig,
    compose_denoised,
    load_checkpoint,
    save_checkpoint,
    train_denoiser,
    train_noise_augmented,
)
from certspoof.saliency_mask import (
    load_region_proposals,
    propose_regions,
    save_region_proposals,
    saliency_for,
    select_salient_region_mask,
)
from certspoof.smoothing import (
    SmoothingConfig,
    certify,
    clopper_pearson_lower,
    normal_cdf,
    normal_quantile,
)

from helpers import assert_gradient_matches_fd

ATTACK_STEPS = 64
ATTACK_NOISE_BATCH = 16
FAST_SMOOTHING = dict(n0=10, n=200, alpha=0.001)


def report(criterion: int, message: str) -> None:
    print(f"[criterion {criterion:02d}] PASS: {message}")


# ---------------------------------------------------------------------------
# Benchmark fixtures (trained once per module)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def bench():
    train = synthetic_shapes(3000, shape=(32, 32, 3), seed=1, name="bench-train")
    eval_ds = synthetic_shapes(300, shape=(32, 32, 3), seed=2, name="bench-eval")
    clf = train_noise_augmented(
        train, TrainingConfig(epochs=5, batch_size=64, learning_rate=1e-3, sigma=0.25, seed=0)
    )
    defense = Defense(
        kind="single", classifier=clf,
        smoothing=SmoothingConfig(sigma=0.25, **FAST_SMOOTHING),
    )
    return {"train": train, "eval": eval_ds, "defense": defense}


@pytest.fixture(scope="module")
def untargeted_grid(bench, tmp_path_factory):
    spec = GridSpec(
        epsilons=(2.0, 4.0, 6.0, 8.0, 10.0),
        attack_kinds=("ghostcert", "shadow_bounded"),
        targeted=False, images_per_cell=50,
        steps=ATTACK_STEPS, noise_batch=ATTACK_NOISE_BATCH,
        master_seed=606,
    )
    store = RecordStore(tmp_path_factory.mktemp("untargeted-grid"))
    records, summaries = run_grid([bench["defense"]], bench["eval"], spec, store)
    return {"records": records, "summaries": summaries, "store": store}


@pytest.fixture(scope="module")
def targeted_grid(bench, tmp_path_factory):
    spec = GridSpec(
        epsilons=(10.0,),
        attack_kinds=("ghostcert", "shadow_bounded"),
        targeted=True, images_per_cell=20,
        steps=ATTACK_STEPS, noise_batch=ATTACK_NOISE_BATCH,
        master_seed=707,
    )
    store = RecordStore(tmp_path_factory.mktemp("targeted-grid"))
    records, summaries = run_grid([bench["defense"]], bench["eval"], spec, store)
    return {"records": records, "summaries": summaries, "store": store}


@pytest.fixture(scope="module")
def mask_ablation(bench, tmp_path_factory):
    spec = GridSpec(
        epsilons=(10.0,),
        attack_kinds=("ghostcert",),
        targeted=True, images_per_cell=20,
        steps=ATTACK_STEPS, noise_batch=ATTACK_NOISE_BATCH,
        master_seed=808,
    )
    store = RecordStore(tmp_path_factory.mktemp("mask-ablation"))
    records, summaries = run_ablation("mask_strategy", [bench["defense"]],
                                      bench["eval"], spec, store)
    return {"records": records, "summaries": summaries, "store": store}


# ---------------------------------------------------------------------------
# Criterion 1: certification oracle equivalence on linear classifiers
# ---------------------------------------------------------------------------


def test_criterion_01_certification_oracle_equivalence():
    start = time.time()
    rng = make_rng(101)
    sigma = 0.25
    cfg = SmoothingConfig(sigma=sigma, n0=100, n=1_000_000, alpha=0.001)
    shape = (4, 4, 1)
    worst = 0.0
    for clf_idx in range(10):
        w = rng.normal(size=16)
        w /= np.linalg.norm(w)
        clf = LinearClassifier.two_class(w, 0.0, shape)
        for probe_idx in range(10):
            z = rng.uniform(1.0, 3.0)  # margins where the certificate is informative
            margin = z * sigma
            x = (margin * w).reshape(shape)
            outcome = certify(clf, x, cfg, seed=clf_idx * 100 + probe_idx,
                              batch_size=20_000)
            closed_form = sigma * normal_quantile(normal_cdf(margin / sigma))
            assert outcome.decision == 1
            rel_err = abs(outcome.radius - closed_form) / closed_form
            worst = max(worst, rel_err)
            assert rel_err <= 0.05
    elapsed = time.time() - start
    assert elapsed < 300
    report(1, f"100 certifications at n=1e6; worst relative radius error "
              f"{worst:.4f} (<= 0.05); {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# Criterion 2: Clopper-Pearson bound validity
# ---------------------------------------------------------------------------


def test_criterion_02_bound_validity():
    start = time.time()
    rng = make_rng(202)
    p_true, n, alpha, runs = 0.9, 1000, 0.001, 10_000
    ks = rng.binomial(n, p_true, size=runs)
    bound_for = {int(k): clopper_pearson_lower(int(k), n, alpha) for k in np.unique(ks)}
    miscoverage = float(np.mean([bound_for[int(k)] > p_true for k in ks]))
    limit = alpha + 3 * np.sqrt(alpha * (1 - alpha) / runs)
    assert miscoverage <= limit
    assert time.time() - start < 120
    report(2, f"miscoverage {miscoverage:.5f} <= {limit:.5f} over {runs} runs")


# ---------------------------------------------------------------------------
# Criterion 3: quantile accuracy
# ---------------------------------------------------------------------------


def test_criterion_03_quantile_accuracy():
    grid = np.linspace(1e-6, 1.0 - 1e-6, 10_000)
    worst = max(abs(normal_cdf(normal_quantile(p)) - p) for p in grid)
    assert worst <= 1e-9
    report(3, f"max |Phi(Phi^-1(p)) - p| = {worst:.2e} on 1e4-point grid")


# ---------------------------------------------------------------------------
# Criterion 4: gradient fidelity for all built-in classifiers
# ---------------------------------------------------------------------------


def test_criterion_04_gradient_fidelity(tiny_classifier, tiny_ensemble, tiny_denoised,
                                        shapes_eval):
    rng = make_rng(404)
    x = shapes_eval.images[7]
    y = int(shapes_eval.labels[7])
    linear = LinearClassifier(rng.normal(size=(4, 3072)), rng.normal(size=4), (32, 32, 3))
    probes = 0
    for clf in (tiny_classifier, tiny_ensemble, tiny_denoised, linear):
        assert_gradient_matches_fd(clf, x, y, n_probes=20, rel_tol=1e-2, seed=44)
        probes += 20
    report(4, f"{probes} finite-difference probes across 4 classifier families, "
              f"rel err <= 1e-2")


# ---------------------------------------------------------------------------
# Criterion 5: attack feasibility invariants
# ---------------------------------------------------------------------------


def test_criterion_05_attack_feasibility(tiny_classifier, tiny_ensemble, tiny_denoised,
                                         shapes_eval):
    scale = np.sqrt(3072 / (224 * 224 * 3))
    defenses = (tiny_classifier, tiny_ensemble, tiny_denoised)
    runs = 0
    checked = []
    for image_idx in range(9):
        x = shapes_eval.images[image_idx]
        y = int(shapes_eval.labels[image_idx])
        props = propose_regions(x)
        smap = saliency_for(defenses[image_idx % 3], x, y)
        mask = select_salient_region_mask(props, smap, k=5)
        for eps_ref in (2.0, 10.0):
            eps = eps_ref * scale
            for clf in defenses:
                cfg = AttackConfig(epsilon=eps, step_size=2.5 * eps / 8, steps=8,
                                   noise_batch=8, sigma=0.25, seed=runs)
                result = ghostcert(clf, x, y, mask, cfg)
                assert np.all(result.delta[mask.mask == 0] == 0.0), "off-mask support"
                assert result.l2_norm <= eps + 1e-6, "budget violation"
                runs += 1
                if runs <= 3:
                    checked.append((clf, x, y, mask, cfg, result.delta))
    assert runs >= 50
    for clf, x, y, mask, cfg, delta in checked:
        rerun = ghostcert(clf, x, y, mask, cfg)
        assert np.array_equal(rerun.delta, delta), "seed reproducibility"
    report(5, f"{runs} masked attack runs: 0 support violations, 0 budget "
              f"violations, bit-exact reruns")


# ---------------------------------------------------------------------------
# Criterion 6: directional reproduction of the untargeted headline ordering
# ---------------------------------------------------------------------------


def test_criterion_06_untargeted_ordering(untargeted_grid):
    summaries = untargeted_grid["summaries"]
    ghost = {s.eps_reference: s.asr for s in summaries if s.attack_kind == "ghostcert"}
    shadow = {s.eps_reference: s.asr for s in summaries if s.attack_kind == "shadow_bounded"}
    budgets = sorted(ghost)
    curve = [ghost[b] for b in budgets]
    assert all(b >= a for a, b in zip(curve, curve[1:])), f"ASR not monotone: {curve}"
    top = budgets[-1]
    assert ghost[top] > shadow[top]
    assert ghost[top] - shadow[top] >= 0.05
    report(6, f"masked-attack ASR {curve} monotone over budgets {budgets}; "
              f"at eps={top:g}: {ghost[top]:.2f} vs bounded shadow {shadow[top]:.2f}")


# ---------------------------------------------------------------------------
# Criterion 7: targeted is harder than untargeted, cell by cell
# ---------------------------------------------------------------------------


def test_criterion_07_targeted_harder(targeted_grid, mask_ablation):
    cells: dict[str, list] = {}
    for record in targeted_grid["records"] + mask_ablation["records"]:
        if record.targeted and record.status == "ok":
            cells.setdefault(record.cell_id, []).append(record)
    assert cells, "no targeted cells produced"
    gaps = []
    for cell_id, records in cells.items():
        targeted_rate = asr_targeted(records)
        untargeted_rate = asr_untargeted(records)
        assert targeted_rate <= untargeted_rate, cell_id
        gaps.append(untargeted_rate - targeted_rate)
    report(7, f"targeted ASR <= untargeted ASR in all {len(cells)} cells "
              f"(mean gap {np.mean(gaps):.2f})")


# ---------------------------------------------------------------------------
# Criterion 8: ablation ordering at the largest budget
# ---------------------------------------------------------------------------


def test_criterion_08_ablation_direction(mask_ablation):
    by_strategy = {s.mask_strategy: s.asr for s in mask_ablation["summaries"]}
    saliency = by_strategy["saliency"]
    random_pixel = by_strategy["random_pixel"]
    random_region = by_strategy["random_region"]
    assert saliency >= random_pixel - 0.05
    assert saliency >= random_region - 0.05
    report(8, f"targeted ASR at top budget: saliency {saliency:.2f}, "
              f"random-pixel {random_pixel:.2f}, random-region {random_region:.2f}")


# ---------------------------------------------------------------------------
# Criterion 9: metric identities and radius re-derivability
# ---------------------------------------------------------------------------


def test_criterion_09_metric_identities(bench, untargeted_grid, targeted_grid,
                                        mask_ablation):
    # exact targeted partition on every generated record set
    partitions = 0
    for batch in (targeted_grid["records"], mask_ablation["records"]):
        by_cell: dict[str, list] = {}
        for r in batch:
            if r.status == "ok":
                by_cell.setdefault(r.cell_id, []).append(r)
        for records in by_cell.values():
            counts = outcome_counts(records)
            n = counts["total"]
            total = sum((Fraction(counts[key], n) for key in
                         ("target", "abstain", "source", "other")), Fraction(0))
            assert total == 1
            partitions += 1
    # stored spoofing radii re-derive bit-exactly from stored adversarials
    defense = bench["defense"]
    rechecked = 0
    for grid in (untargeted_grid, targeted_grid):
        store = grid["store"]
        for record in grid["records"]:
            if record.status != "ok" or record.adversarial_file is None:
                continue
            if rechecked >= 12:
                break
            adversarial = store.load_adversarial(record)
            outcome = certify(defense.classifier, adversarial, defense.smoothing,
                              record.cert_seed)
            assert outcome.decision == record.post_decision
            assert outcome.radius == record.post_radius
            rechecked += 1
    assert rechecked >= 10
    report(9, f"{partitions} cell partitions sum to exactly 1; {rechecked} stored "
              f"radii re-derived bit-exactly")


# ---------------------------------------------------------------------------
# Criterion 10: file-format round-trips
# ---------------------------------------------------------------------------


def test_criterion_10_file_round_trips(tmp_path, shapes_small, shapes_eval):
    # checkpoints: single, ensemble, denoised
    single = train_noise_augmented(shapes_small, TrainingConfig(epochs=0, seed=1))
    members = [train_noise_augmented(shapes_small, TrainingConfig(epochs=0, seed=s))
               for s in (2, 3)]
    denoiser = train_denoiser(shapes_small, TrainingConfig(epochs=0, seed=4))
    models = {
        "single": single,
        "ensemble": Ensemble(members),
        "denoised": compose_denoised(single, denoiser),
    }
    probe = shapes_eval.images[:4]
    for name, model in models.items():
        path = tmp_path / f"{name}.npz"
        save_checkpoint(model, path)
        restored = load_checkpoint(path)
        assert np.array_equal(model.logits_batch(probe), restored.logits_batch(probe)), name
    # region-proposal files
    props = propose_regions(shapes_eval.images[0])
    region_path = tmp_path / "regions.txt"
    save_region_proposals(props, region_path)
    loaded = load_region_proposals(region_path, props.image_shape)
    assert len(loaded) == len(props)
    for a, b in zip(props.proposals, loaded.proposals):
        assert np.array_equal(a.mask, b.mask)
    # trial records
    from certspoof.evaluation import TrialRecord

    record = TrialRecord(
        schema_version=1, trial_id="fixture", cell_id="cell", image_id="d:0",
        image_index=0, defense_kind="single", defense_name="single-sigma0.25",
        sigma=0.25, eps_reference=10.0, eps_pixel=1.43, attack_kind="ghostcert",
        targeted=False, mask_strategy="saliency", mask_k=5, mask_area=100,
        source_label=1, target_label=None, source_decision=1, source_radius=0.41,
        post_decision=2, post_radius=0.39, post_pa_lower=0.93, delta_l2=1.4,
        delta_linf=0.2, delta_tv=10.0, zero_gradient_steps=0, attack_seed=11,
        cert_seed=12, mask_seed=13, adversarial_file=None, wall_time_s=0.5,
    )
    assert TrialRecord.from_json(record.to_json()) == record
    report(10, "checkpoints (3 kinds), region files and trial records "
               "round-trip bit-exactly")
