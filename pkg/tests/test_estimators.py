import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from voxevo.estimators import HyperNeatEvolver, NeatEvolver, SgaEvolver
from voxevo.morphology import generate_benchmark, parse_morphology
from voxevo.physics import SimParams
from voxevo.validation import as_grid, as_grid_list, check_seed

SMALL_GRID = "dims 6 3 3\n" + "\n\n".join("\n".join(["333333"] * 3) for _ in range(3)) + "\n"

FAST_SIM = SimParams(duration=0.5)


def fast(estimator_cls, **kw):
    return estimator_cls(pop_size=4, generations=3, sim_params=FAST_SIM, random_state=7, **kw)


class TestSklearnProtocol:
    @pytest.mark.parametrize("cls", [SgaEvolver, NeatEvolver, HyperNeatEvolver])
    def test_get_set_params_roundtrip(self, cls):
        est = cls()
        params = est.get_params()
        assert params["pop_size"] == 50
        assert params["generations"] == 200
        est.set_params(pop_size=10)
        assert est.get_params()["pop_size"] == 10

    @pytest.mark.parametrize("cls", [SgaEvolver, NeatEvolver, HyperNeatEvolver])
    def test_clone(self, cls):
        est = fast(cls)
        cl = clone(est)
        assert cl.get_params() == est.get_params()

    def test_hyperneat_exposes_substrate_params(self):
        est = HyperNeatEvolver(hidden_layers=4, neurons_per_layer=5)
        p = est.get_params()
        assert p["hidden_layers"] == 4
        assert p["neurons_per_layer"] == 5

    @pytest.mark.parametrize("cls", [SgaEvolver, NeatEvolver, HyperNeatEvolver])
    def test_not_fitted_errors(self, cls):
        est = fast(cls)
        with pytest.raises(NotFittedError):
            est.predict(SMALL_GRID)
        with pytest.raises(NotFittedError):
            est.score(SMALL_GRID)


class TestFitPredictScore:
    @pytest.mark.parametrize("cls", [SgaEvolver, NeatEvolver, HyperNeatEvolver])
    def test_fit_sets_attributes(self, cls):
        est = fast(cls).fit(SMALL_GRID)
        assert hasattr(est, "champion_")
        assert est.n_generations_ == 3
        assert len(est.history_) == 3
        assert np.isfinite(est.champion_fitness_)

    def test_predict_shape_and_range(self):
        est = fast(NeatEvolver).fit(SMALL_GRID)
        grid = as_grid(SMALL_GRID)
        phases = est.predict(grid)
        assert phases.shape == grid.dims
        assert np.all(np.abs(phases) <= 2 * np.pi)

    def test_score_matches_champion_fitness_on_fit_grid(self):
        est = fast(SgaEvolver).fit(SMALL_GRID)
        assert est.score(SMALL_GRID) == est.champion_fitness_

    def test_fit_deterministic_in_random_state(self):
        a = fast(NeatEvolver).fit(SMALL_GRID)
        b = fast(NeatEvolver).fit(SMALL_GRID)
        assert a.champion_fitness_ == b.champion_fitness_
        assert [r.best_fitness for r in a.history_] == [r.best_fitness for r in b.history_]

    def test_fit_on_morphology_set_uses_mean_aptitude(self):
        grids = [generate_benchmark(k, 7, dims=(6, 3, 3)) for k in (1, 2)]
        est = fast(NeatEvolver).fit(grids)
        singles = [est.score(g) for g in grids]
        assert est.score(grids) == pytest.approx(sum(singles) / 2, abs=1e-12)

    def test_predict_list_of_grids(self):
        grids = [generate_benchmark(k, 7, dims=(6, 3, 3)) for k in (1, 2)]
        est = fast(SgaEvolver).fit(grids)
        fields = est.predict(grids)
        assert len(fields) == 2
        assert fields[0].shape == (6, 3, 3)


class TestValidationHelpers:
    def test_as_grid_accepts_document_path_and_grid(self, tmp_path):
        grid = parse_morphology(SMALL_GRID)
        assert as_grid(grid) is grid
        assert as_grid(SMALL_GRID) == grid
        p = tmp_path / "m.txt"
        p.write_text(SMALL_GRID)
        assert as_grid(p) == grid
        assert as_grid(str(p)) == grid

    def test_as_grid_rejects_junk(self):
        with pytest.raises(ValueError):
            as_grid("no/such/file.txt")
        with pytest.raises(TypeError):
            as_grid(42)

    def test_as_grid_list_checks_dims(self):
        g1 = parse_morphology(SMALL_GRID)
        g2 = generate_benchmark(1, 42)  # 20x8x8
        with pytest.raises(ValueError):
            as_grid_list([g1, g2])
        assert len(as_grid_list(g1)) == 1

    def test_check_seed(self):
        assert check_seed(None) == 0
        assert check_seed(5) == 5
        with pytest.raises(TypeError):
            check_seed("abc")
