"""Batch elutriation simulation and feed-size deconvolution."""

__version__ = "0.1.0"

from .physics import (FluidProperties, ChannelGeometry, ParticleProperties,
                      FlowRamp, NeutralBuoyancy, SizeOutOfChannel,
                      LAMINAR_REYNOLDS_LIMIT)
from .feed import (SizeGrid, AnalyticFeed, SplineFeed, RosinRammlerParams,
                   InvalidGrid, DegenerateReference, build_geometric_grid,
                   default_grid, rosin_rammler_feed, project_to_splines,
                   relative_error)
from .forward import (RunContext, BagSchedule, BagMasses, KernelSet,
                      FractionSpan, UniformFromZero, ExplicitTimes, NoBracket,
                      kernel_eval, bag_mass, bag_masses, mass_in_bed,
                      mass_elutriated, mass_in_channels, elutriation_time,
                      build_schedule, add_noise)
from .qp import (QuadraticProblem, QpSolution, Infeasible, IllPosed,
                 MaxIterations, GridMismatch, build_regularizer, solve,
                 combine_problems)
from .inverse import (DeconvolutionProblem, Reconstruction, EmptyGrid,
                      assemble_cross_grammian, build_problem,
                      combine_deconvolutions, deconvolve, sweep_alpha,
                      noise_study)
from .config import ExperimentConfig, ConfigError, load_config, from_dict
