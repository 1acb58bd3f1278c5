"""Ptychographic simulation and Bayesian inversion over generative priors.

Far-field Poisson diffraction data are synthesized from complex phantoms
and inverted two ways: unadjusted Langevin sampling in the latent space of
a compact generator (posterior mean plus pixel-wise uncertainty maps) and
the classical rPIE baseline.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DivergedError, EngineError, FormatError,
                     GeometryError, ValidationError)
from .physics import (DiffractionStack, Probe, ScanPlan, adjoint_exit, dft2,
                      embed_patch_adjoint, expected_intensities,
                      extract_patch, forward_exit, idft2, intensity,
                      sample_poisson, simulate_dataset)
from .generator import (GeneratorModel, LayerSpec, generate_complex,
                        generate_real, load_model, reference_generator,
                        save_model, vjp_complex, vjp_real)
from .inference import (ChainConfig, PosteriorEnsemble, grad_log_likelihood,
                        grad_log_prior, init_latent, log_likelihood,
                        run_chain, ula_step, ula_trajectory)
from .rpie import RpieConfig, rpie_position_update, run_rpie
from .experiment import (ExperimentConfig, MetricsReport, ingest_idx,
                         l2_error, make_disk_probe, make_phantom,
                         make_scan_plan, pearson, run_benchmark, spearman,
                         uncertainty_error_report)

__all__ = [name for name in dir() if not name.startswith("_")]
