"""voxevo: neuroevolution workbench for phase-offset controllers of
simulated voxel actuators.

The estimator classes are the friendly entry point:

    >>> from voxevo import NeatEvolver, generate_benchmark
    >>> est = NeatEvolver(pop_size=20, generations=30, random_state=1)
    >>> est.fit(generate_benchmark(1, 1234))     # doctest: +SKIP
    >>> est.champion_fitness_                    # doctest: +SKIP

Lower layers (morphology, physics, cppn, neat, hyperneat, sga,
orchestrator, distrib) are importable directly for fine-grained control.
"""

from .estimators import HyperNeatEvolver, NeatEvolver, SgaEvolver
from .morphology import VoxelGrid, generate_benchmark, parse_morphology, render_morphology
from .physics import PhaseOffsetField, SimParams, TipTrace, fitness_displacement, simulate
from .controllers import Controller, deserialize_controller, serialize_controller
from .orchestrator import (
    CampaignConfig,
    evaluate_controller,
    evaluate_robustness,
    complexity_report,
    run_campaign,
)

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig",
    "Controller",
    "HyperNeatEvolver",
    "NeatEvolver",
    "PhaseOffsetField",
    "SgaEvolver",
    "SimParams",
    "TipTrace",
    "VoxelGrid",
    "complexity_report",
    "deserialize_controller",
    "evaluate_controller",
    "evaluate_robustness",
    "fitness_displacement",
    "generate_benchmark",
    "parse_morphology",
    "render_morphology",
    "run_campaign",
    "serialize_controller",
    "simulate",
    "__version__",
]
