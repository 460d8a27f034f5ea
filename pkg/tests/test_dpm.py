import numpy as np
import pytest

from dmktrack.dpm import (
    DpmComponent,
    DpmModel,
    PartModel,
    build_template_model,
    deformation_features,
    detect,
    hypothesis_score,
    iou,
    kernel_similarity,
    l2_normalize,
    load_model,
    save_model,
    select_component,
)
from dmktrack.errors import ModelFormatError, ValidationError
from dmktrack.features import FeaturePyramid, build_feature_pyramid, hog_at
from dmktrack.imaging import Frame, to_gray


def zero_component(rows=4, cols=4, bias=0.0, parts=()):
    return DpmComponent(
        root=np.zeros((rows, cols, 9)), bias=bias, parts=list(parts)
    )


def textured_frame(width=96, height=80, boxes=((48, 40, 64, 40),), seed=31):
    """Flat background with an aperiodic textured stamp at each center box."""
    rng = np.random.default_rng(seed)
    rgb = np.full((height, width, 3), (60, 90, 130), dtype=np.uint8)
    stamp = None
    for cx, cy, w, h in boxes:
        if stamp is None:
            blocks = rng.integers(0, 2, size=(h // 4, w // 4))
            stamp = np.where(
                np.kron(blocks, np.ones((4, 4), dtype=np.int64))[..., None] == 0,
                (220, 180, 60), (30, 40, 70),
            ).astype(np.uint8)
        x0, y0 = int(cx - w // 2), int(cy - h // 2)
        rgb[y0 : y0 + h, x0 : x0 + w] = stamp
    return Frame(rgb)


class TestModelIO:
    def minimal_model(self):
        return DpmModel(components=[zero_component(2, 2, bias=0.0)])

    def test_minimal_model_roundtrip(self, tmp_path):
        path = str(tmp_path / "model.json")
        save_model(self.minimal_model(), path)
        model = load_model(path)
        assert len(model.components) == 1
        assert model.components[0].root.shape == (2, 2, 9)

    def test_negative_quadratic_deform_rejected(self, tmp_path):
        part = PartModel(
            weights=np.zeros((2, 2, 9)), anchor=(0.0, 0.0),
            deform=np.array([-1.0, 0.0, 0.0, 0.0]),
        )
        model = DpmModel(components=[zero_component(parts=[part])])
        path = str(tmp_path / "model.json")
        save_model(model, path)
        with pytest.raises(ModelFormatError, match="part 0"):
            load_model(path)

    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(32)
        part = PartModel(
            weights=rng.normal(size=(3, 3, 9)), anchor=(2.0, 1.0),
            deform=np.array([0.05, 0.001, 0.07, -0.002]),
        )
        comp = DpmComponent(
            root=rng.normal(size=(5, 7, 9)), bias=-0.123456789012345,
            parts=[part],
        )
        model = DpmModel(components=[comp])
        p1 = str(tmp_path / "a.json")
        p2 = str(tmp_path / "b.json")
        save_model(model, p1)
        loaded = load_model(p1)
        save_model(loaded, p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()
        np.testing.assert_array_equal(loaded.components[0].root, comp.root)

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = str(tmp_path / "model.json")
        save_model(self.minimal_model(), path)
        import json

        doc = json.load(open(path))
        doc["components"][0]["root"]["weights"] = [0.0] * 5
        json.dump(doc, open(path, "w"))
        with pytest.raises(ModelFormatError, match="component 0"):
            load_model(path)

    def test_garbage_file(self, tmp_path):
        path = str(tmp_path / "model.json")
        open(path, "w").write("{not json")
        with pytest.raises(ModelFormatError):
            load_model(path)


class TestSelectComponent:
    def ratio_model(self, ratios):
        comps = [zero_component(rows=5, cols=int(round(5 * r))) for r in ratios]
        return DpmModel(components=comps)

    def test_log_closest_ratio(self):
        model = self.ratio_model([1.0, 1.8, 2.6])
        assert select_component(model, 100, 40) == 2

    def test_single_component(self):
        model = self.ratio_model([1.4])
        assert select_component(model, 10, 200) == 0

    def test_tie_takes_lower_index(self):
        comps = [zero_component(rows=4, cols=4), zero_component(rows=4, cols=16)]
        model = DpmModel(components=comps)
        # box ratio 2 is log-midway between 1 and 4
        assert select_component(model, 80, 40) == 0

    def test_invariant_to_uniform_scaling(self):
        model = self.ratio_model([1.0, 1.8, 2.6])
        rng = np.random.default_rng(33)
        for _ in range(20):
            w, h = rng.uniform(10, 200, size=2)
            base = select_component(model, w, h)
            for c in (0.1, 2.0, 7.5):
                assert select_component(model, c * w, c * h) == base


class TestDeformationFeatures:
    @pytest.mark.parametrize(
        "dx,dy,expected",
        [
            (0, 0, (0, 0, 0, 0)),
            (2, -1, (4, 2, 1, -1)),
            (-3, 0.5, (9, -3, 0.25, 0.5)),
        ],
    )
    def test_values(self, dx, dy, expected):
        np.testing.assert_allclose(
            deformation_features(dx, dy), expected, atol=1e-12
        )


@pytest.fixture(scope="module")
def random_pyramid():
    rng = np.random.default_rng(34)
    gray = rng.random((128, 128)) * 255
    return build_feature_pyramid(gray, max_levels=12)


class TestHypothesisScore:
    def test_only_bias_survives_zero_filters(self, random_pyramid):
        part = PartModel(
            weights=np.zeros((2, 2, 9)), anchor=(1.0, 1.0),
            deform=np.array([0.1, 0.0, 0.1, 0.0]),
        )
        comp = zero_component(bias=0.5, parts=[part])
        # root at level 10 so the part sits at level 0 unclamped
        hyp = [(3, 3, 10), (2 * 3 + 1, 2 * 3 + 1, 0)]
        assert hypothesis_score(comp, random_pyramid, hyp) == pytest.approx(0.5)

    def test_self_dot_product(self, random_pyramid):
        phi = hog_at(random_pyramid, (2, 3, 0), 4, 4)
        comp = DpmComponent(root=phi.reshape(4, 4, 9).copy(), bias=0.25)
        score = hypothesis_score(comp, random_pyramid, [(2, 3, 0)])
        assert score == pytest.approx(float(phi @ phi) + 0.25, rel=1e-12)

    def test_displaced_part_hand_value(self, random_pyramid):
        part = PartModel(
            weights=np.zeros((2, 2, 9)), anchor=(2.0, 0.0),
            deform=np.array([0.1, 0.0, 0.1, 0.0]),
        )
        comp = zero_component(bias=0.0, parts=[part])
        root_pos = (4, 4, 10)
        # anchor-relative displacement (1, 2)
        part_pos = (2 * 4 + 2 + 1, 2 * 4 + 0 + 2, 0)
        score = hypothesis_score(comp, random_pyramid, [root_pos, part_pos])
        assert score == pytest.approx(-(0.1 * 1 + 0.1 * 4), abs=1e-12)

    def test_level_mismatch_rejected(self, random_pyramid):
        part = PartModel(
            weights=np.zeros((2, 2, 9)), anchor=(0.0, 0.0),
            deform=np.array([0.1, 0.0, 0.1, 0.0]),
        )
        comp = zero_component(parts=[part])
        with pytest.raises(ValidationError):
            hypothesis_score(comp, random_pyramid, [(0, 0, 10), (0, 0, 3)])

    def test_moving_part_off_optimum_strictly_decreases(self, random_pyramid):
        part = PartModel(
            weights=np.zeros((2, 2, 9)), anchor=(1.0, -1.0),
            deform=np.array([0.2, 0.0, 0.15, 0.0]),
        )
        comp = zero_component(parts=[part])
        root_pos = (4, 4, 10)
        opt = (2 * 4 + 1, 2 * 4 - 1, 0)
        best = hypothesis_score(comp, random_pyramid, [root_pos, opt])
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1), (2, 1)):
            moved = (opt[0] + dx, opt[1] + dy, 0)
            assert hypothesis_score(comp, random_pyramid, [root_pos, moved]) < best


class TestKernelSimilarity:
    def make_component(self, rng):
        part = PartModel(
            weights=rng.normal(size=(2, 2, 9)), anchor=(1.0, 1.0),
            deform=np.array([0.05, 0.0, 0.05, 0.0]),
        )
        return DpmComponent(root=rng.normal(size=(3, 3, 9)), parts=[part])

    def test_root_ignores_deformation(self, random_pyramid):
        rng = np.random.default_rng(35)
        comp = self.make_component(rng)
        a = kernel_similarity(0, comp, random_pyramid, (2, 2, 0), (0.0, 0.0))
        b = kernel_similarity(0, comp, random_pyramid, (2, 2, 0), (5.0, -3.0))
        assert a == b

    def test_zero_displacement_zero_cost(self, random_pyramid):
        rng = np.random.default_rng(36)
        comp = self.make_component(rng)
        phi = hog_at(random_pyramid, (3, 3, 0), 2, 2)
        expected = float(
            np.dot(l2_normalize(comp.parts[0].weights.reshape(-1)), l2_normalize(phi))
        )
        s = kernel_similarity(1, comp, random_pyramid, (3, 3, 0), (0.0, 0.0))
        assert s == pytest.approx(expected, abs=1e-12)

    def test_perfect_match_minus_cost(self, random_pyramid):
        phi = hog_at(random_pyramid, (5, 4, 0), 2, 2)
        part = PartModel(
            weights=phi.reshape(2, 2, 9).copy(), anchor=(0.0, 0.0),
            deform=np.array([1.0, 0.0, 0.0, 0.0]),
        )
        comp = DpmComponent(root=np.zeros((3, 3, 9)), parts=[part])
        # normalized deform (1,0,0,0) against normalized (dx^2, dx, 0, 0)
        # with dx = 1: phi_d = (1,1,0,0)/sqrt(2) -> cost = 1/sqrt(2)
        s = kernel_similarity(1, comp, random_pyramid, (5, 4, 0), (1.0, 0.0))
        assert s == pytest.approx(1.0 - 1.0 / np.sqrt(2.0), abs=1e-12)

    def test_bounds(self, random_pyramid):
        rng = np.random.default_rng(37)
        comp = self.make_component(rng)
        for _ in range(100):
            p = (int(rng.integers(0, 12)), int(rng.integers(0, 12)), 0)
            dx = tuple(rng.normal(0, 3, size=2))
            s_root = kernel_similarity(0, comp, random_pyramid, p, dx)
            s_part = kernel_similarity(1, comp, random_pyramid, p, dx)
            assert -1.0 - 1e-12 <= s_root <= 1.0 + 1e-12
            assert -2.0 - 1e-12 <= s_part <= 1.0 + 1e-12


class TestBuildTemplateModel:
    def test_root_only_matches_hog_read(self):
        frame = textured_frame()
        box = (48.0, 40.0, 64.0, 40.0)
        model = build_template_model(frame, box, n_parts=0)
        pyr = build_feature_pyramid(to_gray(frame), max_levels=1)
        comp = model.components[0]
        tl_x = int(round((48 - 32) / 8))
        tl_y = int(round((40 - 20) / 8))
        phi = hog_at(pyr, (tl_x, tl_y, 0), comp.rows, comp.cols)
        np.testing.assert_allclose(comp.root.reshape(-1), phi, atol=1e-12)
        assert comp.rows == 5 and comp.cols == 8

    def test_two_parts_match_exhaustive_pair_oracle(self):
        # two clearly dominant 2x2-cell textured patches inside a flat box
        rgb = np.full((80, 96, 3), (128, 128, 128), dtype=np.uint8)
        for x0, y0 in ((24, 24), (56, 40)):
            ys, xs = np.mgrid[0:16, 0:16]
            checker = ((xs // 2 + ys // 2) % 2).astype(np.uint8)
            rgb[y0 : y0 + 16, x0 : x0 + 16] = (
                checker[..., None] * 200 + 20
            ).astype(np.uint8)
        frame = Frame(rgb)
        box = (48.0, 40.0, 64.0, 40.0)
        model = build_template_model(frame, box, n_parts=2, part_cells=2)
        comp = model.components[0]
        # oracle: brute-force the best disjoint placement pair by energy
        pyr = build_feature_pyramid(to_gray(frame), max_levels=1)
        pmap = pyr.level(0)
        px0 = int(round((48 - 32) / 8))
        py0 = int(round((40 - 20) / 8))
        energies = {}
        for ay in range(5 - 1):
            for ax in range(8 - 1):
                window = pmap.cells[py0 + ay : py0 + ay + 2, px0 + ax : px0 + ax + 2]
                energies[(ax, ay)] = float((window**2).sum())
        best_pair = None
        for a in energies:
            for b in energies:
                if abs(a[0] - b[0]) < 2 and abs(a[1] - b[1]) < 2:
                    continue
                total = energies[a] + energies[b]
                if best_pair is None or total > best_pair[0]:
                    best_pair = (total, {a, b})
        got = {
            (
                int(round(p.anchor[0] + (48 - 32) / 8)) - px0,
                int(round(p.anchor[1] + (40 - 20) / 8)) - py0,
            )
            for p in comp.parts
        }
        assert got == best_pair[1]

    def test_box_too_small_for_parts(self):
        frame = textured_frame()
        with pytest.raises(ValidationError):
            build_template_model(frame, (48.0, 40.0, 20.0, 18.0), n_parts=2,
                                 part_cells=3)

    def test_box_outside_frame(self):
        frame = textured_frame()
        with pytest.raises(ValidationError):
            build_template_model(frame, (90.0, 40.0, 64.0, 40.0))


class TestDetect:
    def test_exemplar_detected_within_one_cell(self):
        frame = textured_frame(width=160, height=120, boxes=((64, 56, 64, 40),))
        box = (64.0, 56.0, 64.0, 40.0)
        model = build_template_model(frame, box, n_parts=2, part_cells=2)
        pyr = build_feature_pyramid(to_gray(frame), max_levels=12)
        dets = detect(model, pyr, stride=1, score_threshold=0.0)
        assert dets
        top = dets[0]
        assert abs(top.box[0] - 64.0) <= 8.0
        assert abs(top.box[1] - 56.0) <= 8.0

    def test_blank_frame_empty(self):
        frame = Frame(np.full((80, 96, 3), 77, dtype=np.uint8))
        model = DpmModel(components=[zero_component(3, 4, bias=0.0)])
        pyr = build_feature_pyramid(to_gray(frame), max_levels=5)
        assert detect(model, pyr, score_threshold=0.1) == []

    def test_two_targets_two_detections(self):
        frame = textured_frame(
            width=220, height=100, boxes=((56, 48, 64, 40), (160, 48, 64, 40))
        )
        model = build_template_model(frame, (56.0, 48.0, 64.0, 40.0), n_parts=0)
        self_score = float((model.components[0].root ** 2).sum())
        pyr = build_feature_pyramid(to_gray(frame), max_levels=12)
        dets = detect(model, pyr, stride=1, score_threshold=0.9 * self_score)
        assert len(dets) == 2
        xs = sorted(d.box[0] for d in dets)
        assert abs(xs[0] - 56) <= 8 and abs(xs[1] - 160) <= 8

    def test_shift_by_stride_cells_shifts_detections(self):
        frame = textured_frame(width=160, height=96, boxes=((56, 48, 64, 40),))
        model = build_template_model(frame, (56.0, 48.0, 64.0, 40.0), n_parts=0)
        gray = to_gray(frame)
        shift = 2 * 8  # stride x cell pixels
        gray_shifted = np.roll(gray, shift, axis=1)
        pyr_a = FeaturePyramid(gray, max_levels=1)
        pyr_b = FeaturePyramid(gray_shifted, max_levels=1)
        thr = 0.5 * float((model.components[0].root ** 2).sum())
        det_a = detect(model, pyr_a, stride=2, score_threshold=thr)
        det_b = detect(model, pyr_b, stride=2, score_threshold=thr)
        assert det_a and det_b
        assert det_b[0].box[0] == pytest.approx(det_a[0].box[0] + shift)
        assert det_b[0].box[1] == pytest.approx(det_a[0].box[1])


class TestIou:
    def test_identical_boxes(self):
        assert iou((10, 10, 4, 4), (10, 10, 4, 4)) == pytest.approx(1.0)

    def test_disjoint_boxes(self):
        assert iou((0, 0, 4, 4), (100, 0, 4, 4)) == 0.0

    def test_half_overlap(self):
        assert iou((0, 0, 4, 4), (2, 0, 4, 4)) == pytest.approx(1.0 / 3.0)
