"""WGAN-GP trainer for the ptychographic object prior.

Trains a DCGAN-style generator on IDX image corpora preprocessed exactly
like the engine's phantoms, and exports the generator into the PGEN weight
format the engine loads. Communication with the engine is file-based only.
"""

__version__ = "0.1.0"

from .data import load_training_images, preprocess_image
from .export import export_pgen
from .models import Critic, Generator
from .wgan import TrainConfig, train
