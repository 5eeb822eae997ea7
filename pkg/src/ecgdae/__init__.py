"""ECG denoising autoencoders and AFib beat classifiers on a numpy engine."""
from .errors import (
    ClassShortage, ConfigError, DivergenceFault, EcgDaeError, InsufficientSignal, LengthError, ParseError,
    RangeError, ShapeError, SpecError, StateError, TruncationError, UnsupportedFormat, VersionError, ZeroPowerError,
)
from .metrics import classification_report, confusion, denoise_metrics, prd, psnr, snr_db
from .models import CLF_NAMES, DAE_NAMES, build, classify, denoise, get_spec
from .noise import NoiseSource, corrupt
from .preprocess import AFIB, CLASSES, NORMAL, detect_r_peaks, load_split, preprocess_record, save_split
from .wfdb import Annotation, Record, load_record, save_record, synthesize_ecg

__version__ = "0.1.0"

__all__ = [
    "ClassShortage", "ConfigError", "DivergenceFault", "EcgDaeError", "InsufficientSignal", "LengthError",
    "ParseError", "RangeError", "ShapeError", "SpecError", "StateError", "TruncationError", "UnsupportedFormat",
    "VersionError", "ZeroPowerError", "classification_report", "confusion", "denoise_metrics", "prd", "psnr",
    "snr_db", "CLF_NAMES", "DAE_NAMES", "build", "classify", "denoise", "get_spec", "NoiseSource", "corrupt",
    "AFIB", "CLASSES", "NORMAL", "detect_r_peaks", "load_split", "preprocess_record", "save_split", "Annotation",
    "Record", "load_record", "save_record", "synthesize_ecg", "__version__",
]
