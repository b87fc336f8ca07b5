"""Saliency maps, region proposals, overlap scoring and mask selection."""

import numpy as np
import pytest

from certspoof.models import LinearClassifier
from certspoof.saliency_mask import (
    RegionProposal,
    RegionProposalSet,
    SaliencyMap,
    combine_class_activation,
    default_min_area,
    gradcam,
    input_gradient_saliency,
    load_region_proposals,
    overlap_score,
    propose_regions,
    random_pixel_mask,
    random_region_mask,
    save_region_proposals,
    select_salient_region_mask,
    unmask_candidate,
)


def proposal_set(masks, shape):
    return RegionProposalSet(
        proposals=tuple(RegionProposal.from_mask(np.asarray(m, dtype=np.uint8)) for m in masks),
        image_shape=shape,
    )


# ---------------------------------------------------------------------------
# gradcam
# ---------------------------------------------------------------------------


def test_gradcam_zero_gradients_give_zero_map():
    acts = np.random.default_rng(0).random((4, 8, 8))
    grads = np.zeros_like(acts)
    cam = combine_class_activation(acts, grads, (16, 16))
    assert cam.shape == (16, 16)
    assert np.all(cam == 0.0)


def test_gradcam_single_map_hand_value():
    # one feature map F, positive pooled gradient w: map = normalize(ReLU(w*F))
    feature = np.array([[0.0, 1.0], [2.0, 4.0]])[None, ...]
    grads = np.full((1, 2, 2), 0.5)
    cam = combine_class_activation(feature, grads, (2, 2))
    expected = np.array([[0.0, 0.5], [1.0, 2.0]]) / 2.0
    assert np.allclose(cam, expected)


def test_gradcam_negative_combination_rectified():
    feature = np.ones((1, 2, 2))
    grads = np.full((1, 2, 2), -1.0)
    cam = combine_class_activation(feature, grads, (2, 2))
    assert np.all(cam == 0.0)


def test_gradcam_output_shape_is_image_shape(tiny_classifier, shapes_eval):
    x = shapes_eval.images[0]
    smap = gradcam(tiny_classifier, x, int(shapes_eval.labels[0]))
    assert smap.values.shape == x.shape[:2]
    assert smap.values.max() == pytest.approx(1.0)


def test_gradcam_rejects_classifier_without_conv():
    clf = LinearClassifier(np.zeros((2, 4)), np.zeros(2), (2, 2, 1))
    with pytest.raises(TypeError):
        gradcam(clf, np.zeros((2, 2, 1)), 0)


# ---------------------------------------------------------------------------
# input-gradient saliency
# ---------------------------------------------------------------------------


def test_input_gradient_saliency_zero_for_constant_classifier():
    clf = LinearClassifier(np.zeros((2, 9)), np.array([0.0, 3.0]), (3, 3, 1))
    smap = input_gradient_saliency(clf, np.zeros((3, 3, 1)), 1)
    assert np.all(smap.values == 0.0)


def test_input_gradient_saliency_linear_pattern():
    # two-class linear model: |grad| proportional to per-pixel |w| pattern
    w = np.array([3.0, 0.0, 1.0, 2.0])
    clf = LinearClassifier.two_class(w, 0.0, (2, 2, 1))
    smap = input_gradient_saliency(clf, np.zeros((2, 2, 1)), 0)
    expected = np.abs(w).reshape(2, 2) / np.abs(w).max()
    assert np.allclose(smap.values, expected, atol=1e-12)
    assert smap.values.max() == pytest.approx(1.0)


def test_saliency_map_validation():
    with pytest.raises(ValueError):
        SaliencyMap(np.full((2, 2), 1.5))
    with pytest.raises(ValueError):
        SaliencyMap(np.zeros((2, 2, 1)))


# ---------------------------------------------------------------------------
# propose_regions
# ---------------------------------------------------------------------------


def test_constant_image_single_region():
    x = np.full((8, 8, 3), 0.4)
    props = propose_regions(x, min_area=1)
    assert len(props) == 1
    assert props.proposals[0].area == 64


def test_two_tone_halves_merge_to_two_regions():
    # merging oracle on a 4x4 two-tone image: zero-weight edges join each
    # half first; the cross-boundary weight exceeds both adaptive
    # thresholds, so exactly the two halves survive
    x = np.zeros((4, 4, 1))
    x[:, 2:] = 0.8
    props = propose_regions(x, min_area=1, presmooth=0.0, scale=0.3)
    assert len(props) == 2
    areas = sorted(p.area for p in props.proposals)
    assert areas == [8, 8]
    left = props.proposals[0].mask
    assert np.array_equal(left, (np.arange(4) < 2)[None, :].repeat(4, axis=0).astype(np.uint8))


def test_min_area_larger_than_image_gives_empty_set():
    x = np.full((6, 6, 1), 0.2)
    props = propose_regions(x, min_area=100)
    assert len(props) == 0


def test_proposals_pairwise_disjoint_and_partition_with_u(shapes_eval):
    x = shapes_eval.images[0]
    props = propose_regions(x)
    total = np.zeros(x.shape[:2], dtype=np.int64)
    for p in props.proposals:
        total += p.mask
    assert total.max() <= 1  # pairwise disjoint
    u = unmask_candidate(props)
    assert np.array_equal(total + u.mask, np.ones_like(total))


def test_proposals_deterministic(shapes_eval):
    x = shapes_eval.images[1]
    a = propose_regions(x)
    b = propose_regions(x)
    assert len(a) == len(b)
    for pa, pb in zip(a.proposals, b.proposals):
        assert np.array_equal(pa.mask, pb.mask)


def test_default_min_area_follows_frame_fraction():
    assert default_min_area((224, 224)) == int(np.ceil(0.006 * 224 * 224))
    assert default_min_area((32, 32)) == 7


# ---------------------------------------------------------------------------
# region proposal files
# ---------------------------------------------------------------------------


def test_region_file_round_trip_bit_exact(shapes_eval, tmp_path):
    props = propose_regions(shapes_eval.images[2])
    path = tmp_path / "regions.txt"
    save_region_proposals(props, path)
    loaded = load_region_proposals(path, props.image_shape)
    assert len(loaded) == len(props)
    for a, b in zip(props.proposals, loaded.proposals):
        assert np.array_equal(a.mask, b.mask)
        assert a.area == b.area
    # byte-stable second save
    path2 = tmp_path / "regions2.txt"
    save_region_proposals(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_region_file_full_frame(tmp_path):
    props = proposal_set([np.ones((4, 6))], (4, 6))
    path = tmp_path / "full.txt"
    save_region_proposals(props, path)
    loaded = load_region_proposals(path, (4, 6))
    assert loaded.proposals[0].area == 24


def test_region_file_shape_mismatch(tmp_path):
    props = proposal_set([np.ones((4, 4))], (4, 4))
    path = tmp_path / "regions.txt"
    save_region_proposals(props, path)
    with pytest.raises(ValueError, match="does not match image shape"):
        load_region_proposals(path, (4, 5))


def test_region_file_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a region file\n")
    with pytest.raises(ValueError, match="magic"):
        load_region_proposals(path, (4, 4))
    truncated = tmp_path / "trunc.txt"
    truncated.write_text("certspoof-regions v1\nshape 4 4\ncount 2\nregion 0 area 16 runs 2\n0 16\n")
    with pytest.raises(ValueError, match="truncated"):
        load_region_proposals(truncated, (4, 4))


def test_region_file_external_overlap_permitted(tmp_path):
    masks = [np.ones((3, 3)), np.ones((3, 3))]
    props = proposal_set(masks, (3, 3))
    path = tmp_path / "overlap.txt"
    save_region_proposals(props, path)
    loaded = load_region_proposals(path, (3, 3))
    assert len(loaded) == 2


# ---------------------------------------------------------------------------
# unmask candidate
# ---------------------------------------------------------------------------


def test_unmask_candidate_complement_cases():
    shape = (4, 4)
    full = proposal_set([np.ones(shape)], shape)
    assert unmask_candidate(full).area == 0
    empty = RegionProposalSet(proposals=(), image_shape=shape)
    assert unmask_candidate(empty).area == 16
    half = np.zeros(shape)
    half[:2] = 1
    props = proposal_set([half], shape)
    u = unmask_candidate(props)
    assert np.array_equal(u.mask, 1 - half.astype(np.uint8))


# ---------------------------------------------------------------------------
# overlap score
# ---------------------------------------------------------------------------


def test_overlap_score_disjoint_support():
    m = np.zeros((2, 2), dtype=np.uint8)
    m[0, 0] = 1
    s = np.zeros((2, 2))
    s[1, 1] = 0.7
    assert overlap_score(m, s) == 0.0


def test_overlap_score_binary_self_overlap_is_half():
    m = np.zeros((3, 3), dtype=np.uint8)
    m[1, :] = 1
    assert overlap_score(m, m.astype(np.float64)) == pytest.approx(0.5)


def test_overlap_score_hand_value():
    # 2x2 all-ones region, uniform saliency 0.5: 2 / (4 + 2) = 1/3
    m = np.ones((2, 2), dtype=np.uint8)
    s = np.full((2, 2), 0.5)
    assert overlap_score(m, s) == pytest.approx(1.0 / 3.0)


def test_overlap_score_degenerate_zero():
    assert overlap_score(np.zeros((2, 2), dtype=np.uint8), np.zeros((2, 2))) == 0.0


def test_overlap_score_range_and_monotonicity(rng):
    for _ in range(50):
        m = (rng.random((6, 6)) < 0.5).astype(np.uint8)
        s = rng.random((6, 6))
        v = overlap_score(m, s)
        assert 0.0 <= v < 1.0
    # increasing the numerator with denominators fixed raises the score
    m = np.zeros((2, 2), dtype=np.uint8)
    m[0, 0] = 1
    low = np.array([[0.2, 0.4], [0.4, 0.0]])
    high = np.array([[0.4, 0.2], [0.4, 0.0]])  # same sum, more mass inside M
    assert overlap_score(m, high) > overlap_score(m, low)


def test_overlap_score_shape_mismatch():
    with pytest.raises(ValueError):
        overlap_score(np.ones((2, 2), dtype=np.uint8), np.ones((3, 3)))


# ---------------------------------------------------------------------------
# select_salient_region_mask
# ---------------------------------------------------------------------------


def test_select_single_proposal_above_u():
    shape = (4, 4)
    region = np.zeros(shape)
    region[:2, :2] = 1
    props = proposal_set([region], shape)
    saliency = SaliencyMap(region.astype(np.float64))
    selected = select_salient_region_mask(props, saliency, k=1)
    assert np.array_equal(selected.mask, region.astype(np.uint8))
    assert selected.selected == (0,)


def test_select_k_at_least_candidates_unions_everything(shapes_eval):
    x = shapes_eval.images[3]
    props = propose_regions(x)
    saliency = SaliencyMap(np.zeros(x.shape[:2]))
    selected = select_salient_region_mask(props, saliency, k=len(props) + 1)
    assert selected.mask.min() == 1  # proposals plus U cover the frame


def test_select_hand_ranked_scores():
    # proposals scoring 0.4 and 0.1, U scoring between: top-2 is {0.4, U}
    shape = (2, 4)
    a = np.array([[1, 1, 0, 0], [1, 1, 0, 0]])       # area 4
    b = np.array([[0, 0, 1, 0], [0, 0, 1, 0]])       # area 2; U = last column
    props = proposal_set([a, b], shape)
    saliency = np.zeros(shape)
    saliency[:, :2] = 1.0   # sum 4: score(a) = 4/8 = 0.5
    saliency[0, 3] = 0.45   # U area 2, overlap 0.45: score(U) = .45/6.45 ~ .07
    # score(b) = 0 / 6 = 0
    selected = select_salient_region_mask(props, SaliencyMap(saliency / 1.0), k=2)
    assert selected.selected == (0, 2)  # proposal a and U (index == len(props))
    expected = a.astype(np.uint8) | np.array([[0, 0, 0, 1], [0, 0, 0, 1]], dtype=np.uint8)
    assert np.array_equal(selected.mask, expected)


def test_select_tie_breaks_by_area_then_index():
    shape = (2, 6)
    small = np.array([[1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0]])
    big = np.array([[0, 1, 1, 0, 0, 0], [0, 1, 1, 0, 0, 0]])
    props = proposal_set([small, big], shape)
    saliency = SaliencyMap(np.zeros(shape))  # every score 0
    selected = select_salient_region_mask(props, saliency, k=1)
    assert selected.selected == (2,)  # U has the largest area at equal score


def test_select_invariant_to_proposal_order(shapes_eval):
    x = shapes_eval.images[4]
    props = propose_regions(x)
    saliency = SaliencyMap(np.linspace(0, 1, x.shape[0] * x.shape[1]).reshape(x.shape[:2]))
    selected = select_salient_region_mask(props, saliency, k=3)
    reordered = RegionProposalSet(proposals=tuple(reversed(props.proposals)),
                                  image_shape=props.image_shape)
    selected_r = select_salient_region_mask(reordered, saliency, k=3)
    assert np.array_equal(selected.mask, selected_r.mask)


def test_select_mask_is_binary(shapes_eval):
    x = shapes_eval.images[5]
    props = propose_regions(x)
    saliency = SaliencyMap(np.ones(x.shape[:2]) * 0.5)
    selected = select_salient_region_mask(props, saliency, k=4)
    assert set(np.unique(selected.mask)) <= {0, 1}


# ---------------------------------------------------------------------------
# random masks
# ---------------------------------------------------------------------------


def test_random_pixel_mask_extremes():
    ones = random_pixel_mask((8, 8), 1.0, seed=0)
    zeros = random_pixel_mask((8, 8), 0.0, seed=0)
    assert ones.mask.min() == 1
    assert zeros.mask.max() == 0


def test_random_pixel_mask_density():
    mask = random_pixel_mask((64, 64), 0.5, seed=5)
    fraction = mask.mask.mean()
    assert abs(fraction - 0.5) <= 3 * np.sqrt(0.25 / 4096)


def test_random_pixel_mask_deterministic():
    a = random_pixel_mask((16, 16), 0.3, seed=9)
    b = random_pixel_mask((16, 16), 0.3, seed=9)
    assert np.array_equal(a.mask, b.mask)


def test_random_region_mask_all_when_k_large():
    shape = (4, 4)
    quarters = []
    for dy in (0, 2):
        for dx in (0, 2):
            m = np.zeros(shape)
            m[dy:dy + 2, dx:dx + 2] = 1
            quarters.append(m)
    props = proposal_set(quarters, shape)
    mask = random_region_mask(props, k=10, seed=0)
    assert mask.mask.min() == 1


def test_random_region_mask_single_proposal():
    shape = (3, 3)
    m = np.zeros(shape)
    m[0] = 1
    props = proposal_set([m], shape)
    mask = random_region_mask(props, k=1, seed=4)
    assert np.array_equal(mask.mask, m.astype(np.uint8))


def test_random_region_mask_uniform_frequency():
    shape = (2, 4)
    cols = []
    for j in range(4):
        m = np.zeros(shape)
        m[:, j] = 1
        cols.append(m)
    props = proposal_set(cols, shape)
    picks = np.zeros(4)
    n = 1000
    for seed in range(n):
        mask = random_region_mask(props, k=1, seed=seed)
        picks[mask.selected[0]] += 1
    expected, sd = n / 4, np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(picks - expected) <= 3 * sd)


def test_random_region_mask_empty_set_errors():
    props = RegionProposalSet(proposals=(), image_shape=(2, 2))
    with pytest.raises(ValueError):
        random_region_mask(props, k=1, seed=0)
