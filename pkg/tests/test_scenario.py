"""Scenario file parsing, item rasterization, and mass-scale tests."""

import numpy as np
import pytest

from beltflow.errors import ValidationError
from beltflow.geometry import SceneGeometry, build_grid, rasterize_mask
from beltflow.scenario import (
    ItemSpec,
    Placement,
    compute_mass_scale,
    compute_rho_max,
    loads_scenario,
    prepare_scenario,
    rasterize_initial_density,
    scatter_placements,
)


def open_scene_grid(belt=(0.6, 0.4, 0.4), d=0.01):
    scene = SceneGeometry(*belt)
    grid = build_grid(scene, d, d)
    return scene, grid, rasterize_mask(scene, grid)


class TestRhoMax:
    def test_paper_cargo(self):
        assert compute_rho_max(ItemSpec()) == pytest.approx(0.07 / 0.0049)
        assert compute_rho_max(ItemSpec()) == pytest.approx(14.2857, abs=1e-4)

    def test_unit_square(self):
        assert compute_rho_max(ItemSpec(length=1.0, width=1.0, height=1.0, mass=1.0)) == 1.0


class TestRasterizeInitialDensity:
    def test_single_item_full_block(self):
        _, grid, mask = open_scene_grid()
        # center on a cell-center lattice point: edges land on faces
        p = [Placement(-0.205, 0.195)]
        rho = rasterize_initial_density(p, ItemSpec(), grid, mask).rho
        filled = np.isclose(rho, 1.0, atol=1e-12)
        assert filled.sum() == 49  # 7 x 7 cells of density one
        assert np.all(np.isclose(rho[~filled], 0.0, atol=1e-12))
        # oracle: cells whose center falls inside the square
        cx, cy = grid.center_mesh()
        inside = (np.abs(cx + 0.205) < 0.035) & (np.abs(cy - 0.195) < 0.035)
        assert inside.sum() == 49
        assert np.array_equal(filled, inside)

    def test_integral_matches_item_area(self):
        _, grid, mask = open_scene_grid()
        items = ItemSpec()
        p = [Placement(-0.203, 0.192), Placement(-0.117, 0.213)]  # off-lattice
        field = rasterize_initial_density(p, items, grid, mask)
        assert field.integral() == pytest.approx(2 * items.length * items.width, rel=1e-9)

    def test_zero_items(self):
        _, grid, mask = open_scene_grid()
        assert not rasterize_initial_density([], ItemSpec(), grid, mask).rho.any()

    def test_overlap_rejected_with_index(self):
        _, grid, mask = open_scene_grid()
        p = [Placement(-0.2, 0.2), Placement(-0.17, 0.21)]
        with pytest.raises(ValidationError, match="0 and 1"):
            rasterize_initial_density(p, ItemSpec(), grid, mask)

    def test_touching_items_allowed(self):
        _, grid, mask = open_scene_grid()
        p = [Placement(-0.2, 0.2), Placement(-0.13, 0.2)]  # edge to edge
        field = rasterize_initial_density(p, ItemSpec(), grid, mask)
        assert field.integral() == pytest.approx(2 * 0.07 * 0.07, rel=1e-9)

    def test_wall_overlap_rejected(self):
        _, grid, mask = open_scene_grid()
        with pytest.raises(ValidationError, match="item 0"):
            rasterize_initial_density([Placement(-0.2, 0.03)], ItemSpec(), grid, mask)

    def test_outside_grid_rejected(self):
        _, grid, mask = open_scene_grid()
        with pytest.raises(ValidationError, match="outside"):
            rasterize_initial_density([Placement(5.0, 0.2)], ItemSpec(), grid, mask)

    def test_angle_ignored_with_warning(self):
        _, grid, mask = open_scene_grid()
        with pytest.warns(UserWarning, match="axis-aligned"):
            tilted = rasterize_initial_density([Placement(-0.2, 0.2, 30.0)], ItemSpec(), grid, mask)
        straight = rasterize_initial_density([Placement(-0.2, 0.2, 0.0)], ItemSpec(), grid, mask)
        assert np.array_equal(tilted.rho, straight.rho)

    def test_deterministic(self):
        _, grid, mask = open_scene_grid()
        p = [Placement(-0.203, 0.192)]
        a = rasterize_initial_density(p, ItemSpec(), grid, mask)
        b = rasterize_initial_density(p, ItemSpec(), grid, mask)
        assert np.array_equal(a.rho, b.rho)


class TestMassScale:
    def test_paper_total_mass(self):
        _, grid, mask = open_scene_grid(belt=(2.0, 0.8, 1.6))
        items = ItemSpec()
        placements = scatter_placements(items, 100, (-1.5, -0.2), (0.06, 0.74), seed=1)
        rho0 = rasterize_initial_density(placements, items, grid, mask)
        scale = compute_mass_scale(rho0, 100, items)
        assert scale * rho0.integral() == pytest.approx(4.91, rel=1e-12)

    def test_zero_items_zero_scale(self):
        _, grid, mask = open_scene_grid()
        rho0 = rasterize_initial_density([], ItemSpec(), grid, mask)
        assert compute_mass_scale(rho0, 0, ItemSpec()) == 0.0

    def test_doubled_integral_halves_scale(self):
        _, grid, mask = open_scene_grid()
        items = ItemSpec()
        one = rasterize_initial_density([Placement(-0.2, 0.2)], items, grid, mask)
        two = rasterize_initial_density(
            [Placement(-0.2, 0.2), Placement(-0.2, 0.3)], items, grid, mask
        )
        s1 = compute_mass_scale(one, 5, items)
        s2 = compute_mass_scale(two, 5, items)
        assert s2 == pytest.approx(0.5 * s1, rel=1e-12)

    def test_empty_density_with_items_rejected(self):
        _, grid, mask = open_scene_grid()
        rho0 = rasterize_initial_density([], ItemSpec(), grid, mask)
        with pytest.raises(ValidationError):
            compute_mass_scale(rho0, 10, ItemSpec())


class TestScatterPlacements:
    def test_counts_and_determinism(self):
        items = ItemSpec()
        a = scatter_placements(items, 40, (-1.0, -0.2), (0.1, 0.7), seed=9)
        b = scatter_placements(items, 40, (-1.0, -0.2), (0.1, 0.7), seed=9)
        assert len(a) == 40
        assert a == b

    def test_different_seeds_differ(self):
        items = ItemSpec()
        a = scatter_placements(items, 40, (-1.0, -0.2), (0.1, 0.7), seed=1)
        b = scatter_placements(items, 40, (-1.0, -0.2), (0.1, 0.7), seed=2)
        assert a != b

    def test_no_overlap(self):
        items = ItemSpec()
        ps = scatter_placements(items, 60, (-1.0, -0.2), (0.1, 0.7), seed=3)
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                overlap = (
                    abs(ps[i].x - ps[j].x) < items.length
                    and abs(ps[i].y - ps[j].y) < items.width
                )
                assert not overlap

    def test_region_too_small(self):
        with pytest.raises(ValidationError):
            scatter_placements(ItemSpec(), 500, (-0.5, -0.2), (0.1, 0.3), seed=0)


MINIMAL = """
[scene]
diverter_angle_deg = 45
diverter_anchor_y = 0.15
diverter_length = 0.919
"""


class TestLoadScenario:
    def test_defaults_applied(self):
        spec = loads_scenario(MINIMAL)
        assert spec.model.sigma == 10000.0
        assert spec.model.steepness == 50.0
        assert spec.model.belt_speed == 0.13
        assert spec.solver.dt == 0.002
        assert spec.dx == 0.01 and spec.dy == 0.01
        assert spec.scene.belt_length == 2.0

    def test_eps_factor_resolution(self):
        spec = loads_scenario(MINIMAL + "[model]\neps_factor = 5.5\n")
        assert spec.model.eps == pytest.approx(5.5 * 0.13)
        assert spec.model.eps == pytest.approx(0.715)

    def test_negative_eps_factor_rejected(self):
        with pytest.raises(ValidationError, match="eps_factor"):
            loads_scenario(MINIMAL + "[model]\neps_factor = -1\n")

    def test_unknown_key_rejected_with_line(self):
        text = MINIMAL + "[model]\nsigm = 3\n"
        with pytest.raises(ValidationError, match=r":\d+: unknown key 'sigm'"):
            loads_scenario(text)

    def test_unparseable_value_names_key_and_line(self):
        with pytest.raises(ValidationError, match="v_belt"):
            loads_scenario(MINIMAL + "[model]\nv_belt = fast\n")

    def test_placement_rows(self):
        text = "[items]\ncount = 2\n[placements]\n-0.5 0.2 0\n-0.3, 0.4, 15\n"
        spec = loads_scenario(text)
        assert len(spec.placements) == 2
        assert spec.placements[1] == Placement(-0.3, 0.4, 15.0)

    def test_bad_placement_row(self):
        with pytest.raises(ValidationError, match=":2:"):
            loads_scenario("[placements]\n-0.5 oops\n")

    def test_incomplete_diverter(self):
        with pytest.raises(ValidationError, match="diverter"):
            loads_scenario("[scene]\ndiverter_angle_deg = 45\n")

    def test_comments_and_blanks_ignored(self):
        spec = loads_scenario("# header\n\n[model]\nsigma = 2000  # inline\n")
        assert spec.model.sigma == 2000.0

    def test_duplicate_key_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            loads_scenario("[model]\nsigma = 1\nsigma = 2\n")


class TestPrepareScenario:
    def test_placement_count_mismatch(self):
        text = "[items]\ncount = 3\n[placements]\n-0.5 0.2\n"
        with pytest.raises(ValidationError, match="3"):
            prepare_scenario(loads_scenario(text))

    def test_synthetic_placements_by_seed(self):
        spec = loads_scenario(MINIMAL + "[items]\ncount = 20\n")
        a = prepare_scenario(spec, seed=5)
        b = prepare_scenario(spec, seed=5)
        c = prepare_scenario(spec, seed=6)
        assert a.placements == b.placements
        assert a.placements != c.placements
        assert np.array_equal(a.rho0.rho, b.rho0.rho)

    def test_initial_mass_is_exact(self):
        spec = loads_scenario(MINIMAL)
        scen = prepare_scenario(spec, seed=0)
        assert scen.params.mass_scale * scen.rho0.integral() == pytest.approx(4.91, rel=1e-12)
        assert scen.params.rho_max_physical == pytest.approx(14.2857, abs=1e-4)
