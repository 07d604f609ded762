"""Scikit-learn style front ends for the three controller-design engines.

`fit(X)` evolves a controller for morphology X (or for a set of
morphologies, in which case the robustness aptitude is the selection
fitness); `predict(X)` returns the champion's per-voxel phase offsets and
`score(X)` its displacement.  All hyperparameters are plain constructor
arguments, so the estimators compose with `clone`, grid search, and
pipelines.
"""
from __future__ import annotations

from dataclasses import replace

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .hyperneat import SubstrateSpec
from .neat import NeatConfig
from .orchestrator import (
    CampaignConfig,
    evaluate_controller,
    evaluate_robustness,
    run_trial,
)
from .physics import SimParams
from .sga import SgaConfig
from .validation import as_grid, as_grid_list, check_seed


class PhaseEvolverBase(BaseEstimator):
    """Common fit machinery; subclasses define `_algorithm` and engine
    config assembly."""

    _algorithm = ""

    def _campaign_config(self) -> CampaignConfig:
        raise NotImplementedError

    def fit(self, X, y=None):
        """Evolve a controller for the morphology (or morphologies) X."""
        grids = as_grid_list(X)
        cfg = self._campaign_config()
        trial = run_trial(self._algorithm, grids, cfg, seed=check_seed(self.random_state))
        self.champion_ = trial.champion
        self.champion_fitness_ = trial.champion_fitness
        self.history_ = trial.records
        self.n_generations_ = len(trial.records)
        self._fit_grids_ = grids
        self._sim_params_ = cfg.sim
        return self

    def _check_fitted(self):
        if not hasattr(self, "champion_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def predict(self, X):
        """Per-voxel phase offsets for a morphology (array of grid shape) or
        a list of morphologies (list of arrays)."""
        self._check_fitted()
        if isinstance(X, (list, tuple)):
            return [self.champion_.phase_field(as_grid(x)).values for x in X]
        return self.champion_.phase_field(as_grid(X)).values

    def score(self, X, y=None):
        """Displacement (voxel lengths) of the champion on X; the mean over
        a list of morphologies."""
        self._check_fitted()
        if isinstance(X, (list, tuple)):
            return evaluate_robustness(self.champion_, [as_grid(x) for x in X], self._sim_params_)
        return evaluate_controller(self.champion_, as_grid(X), self._sim_params_)


class SgaEvolver(PhaseEvolverBase):
    """Direct-encoding baseline: evolves the phase matrix itself."""

    _algorithm = "sga"

    def __init__(self, pop_size=50, generations=200, p_crossover=0.9, p_mutation=0.1,
                 tournament_size=3, random_state=0, sim_params=None, jobs=1):
        self.pop_size = pop_size
        self.generations = generations
        self.p_crossover = p_crossover
        self.p_mutation = p_mutation
        self.tournament_size = tournament_size
        self.random_state = random_state
        self.sim_params = sim_params
        self.jobs = jobs

    def _campaign_config(self) -> CampaignConfig:
        return CampaignConfig(
            algorithm="sga",
            sim=self.sim_params or SimParams(),
            jobs=self.jobs,
            sga=SgaConfig(
                pop_size=self.pop_size,
                generations=self.generations,
                p_crossover=self.p_crossover,
                p_mutation=self.p_mutation,
                tournament_size=self.tournament_size,
            ),
        )


class NeatEvolver(PhaseEvolverBase):
    """NEAT-evolved CPPN queried directly for per-voxel phases."""

    _algorithm = "neat"

    def __init__(self, pop_size=50, generations=200, compat_threshold=3.0,
                 c_disjoint=1.0, c_weight=0.5, max_stagnation=25,
                 survival_threshold=0.2, p_mut_activation=0.4, p_add_conn=0.2,
                 p_del_conn=0.1, p_toggle_conn=0.5, p_add_node=0.2,
                 p_del_node=0.1, random_state=0, sim_params=None, jobs=1):
        self.pop_size = pop_size
        self.generations = generations
        self.compat_threshold = compat_threshold
        self.c_disjoint = c_disjoint
        self.c_weight = c_weight
        self.max_stagnation = max_stagnation
        self.survival_threshold = survival_threshold
        self.p_mut_activation = p_mut_activation
        self.p_add_conn = p_add_conn
        self.p_del_conn = p_del_conn
        self.p_toggle_conn = p_toggle_conn
        self.p_add_node = p_add_node
        self.p_del_node = p_del_node
        self.random_state = random_state
        self.sim_params = sim_params
        self.jobs = jobs

    def _neat_config(self) -> NeatConfig:
        return NeatConfig(
            pop_size=self.pop_size,
            generations=self.generations,
            compat_threshold=self.compat_threshold,
            c_disjoint=self.c_disjoint,
            c_weight=self.c_weight,
            max_stagnation=self.max_stagnation,
            survival_threshold=self.survival_threshold,
            p_mut_activation=self.p_mut_activation,
            p_add_conn=self.p_add_conn,
            p_del_conn=self.p_del_conn,
            p_toggle_conn=self.p_toggle_conn,
            p_add_node=self.p_add_node,
            p_del_node=self.p_del_node,
        )

    def _campaign_config(self) -> CampaignConfig:
        return CampaignConfig(
            algorithm=self._algorithm,
            sim=self.sim_params or SimParams(),
            jobs=self.jobs,
            neat=self._neat_config(),
        )


class HyperNeatEvolver(NeatEvolver):
    """NEAT-evolved CPPN painting a fixed ReLU substrate that serves as the
    controller."""

    _algorithm = "hyperneat"

    def __init__(self, pop_size=50, generations=200, compat_threshold=3.0,
                 c_disjoint=1.0, c_weight=0.5, max_stagnation=25,
                 survival_threshold=0.2, p_mut_activation=0.4, p_add_conn=0.2,
                 p_del_conn=0.1, p_toggle_conn=0.5, p_add_node=0.2,
                 p_del_node=0.1, hidden_layers=3, neurons_per_layer=4,
                 weight_threshold=0.2, weight_scale=3.0, random_state=0,
                 sim_params=None, jobs=1):
        super().__init__(
            pop_size=pop_size, generations=generations, compat_threshold=compat_threshold,
            c_disjoint=c_disjoint, c_weight=c_weight, max_stagnation=max_stagnation,
            survival_threshold=survival_threshold, p_mut_activation=p_mut_activation,
            p_add_conn=p_add_conn, p_del_conn=p_del_conn, p_toggle_conn=p_toggle_conn,
            p_add_node=p_add_node, p_del_node=p_del_node, random_state=random_state,
            sim_params=sim_params, jobs=jobs,
        )
        self.hidden_layers = hidden_layers
        self.neurons_per_layer = neurons_per_layer
        self.weight_threshold = weight_threshold
        self.weight_scale = weight_scale

    def _campaign_config(self) -> CampaignConfig:
        return replace(
            super()._campaign_config(),
            algorithm=self._algorithm,
            substrate=SubstrateSpec(
                hidden_layers=self.hidden_layers,
                neurons_per_layer=self.neurons_per_layer,
                weight_threshold=self.weight_threshold,
                weight_scale=self.weight_scale,
            ),
        )
