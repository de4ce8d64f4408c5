"""Cell-level attribute descriptors for specimen classification."""
from .attrlearn import AttrConfig, AttrModel, train_arcad, train_crad
from .dataset import Cell, Dataset, SpecimenSample, load_dataset, make_folds, save_dataset
from .describe import describe
from .experiments import ExperimentConfig, run_eval, sweep_code_length
from .featmap import LiftConfig, featurize
from .synth import SynthConfig, generate

__all__ = [
    "AttrConfig", "AttrModel", "Cell", "Dataset", "ExperimentConfig", "LiftConfig",
    "SpecimenSample", "SynthConfig", "describe", "featurize", "generate", "load_dataset",
    "make_folds", "run_eval", "save_dataset", "sweep_code_length", "train_arcad", "train_crad",
]
