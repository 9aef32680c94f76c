"""Android malware detection and family grouping from static features and signer serials."""

from .serial import SerialNumber
from .ingest import RawPackage, RawManifest, parse_apk, load_profile, dump_profile
from .features import AppProfile, FeatureConfig, default_config, extract_profile, load_config
from .likelihood import LikelihoodModel, train, likelihood_ratio, log_likelihood_ratio, exceeds_threshold
from .blacklist import SerialBlacklist, build_blacklist, contains, family_histogram, serial_stats
from .detector import DetectorParams, Verdict, detect, detect_batch
from .classifier import (
    GroupSet,
    GroupSignature,
    classify_stream,
    group_accuracy,
    sim_api,
    sim_cmd,
    sim_perm,
    similarity_score,
)

__all__ = [
    "SerialNumber",
    "RawPackage",
    "RawManifest",
    "parse_apk",
    "load_profile",
    "dump_profile",
    "AppProfile",
    "FeatureConfig",
    "default_config",
    "extract_profile",
    "load_config",
    "LikelihoodModel",
    "train",
    "likelihood_ratio",
    "log_likelihood_ratio",
    "exceeds_threshold",
    "SerialBlacklist",
    "build_blacklist",
    "contains",
    "family_histogram",
    "serial_stats",
    "DetectorParams",
    "Verdict",
    "detect",
    "detect_batch",
    "GroupSet",
    "GroupSignature",
    "classify_stream",
    "group_accuracy",
    "sim_api",
    "sim_cmd",
    "sim_perm",
    "similarity_score",
]

__version__ = "0.1.0"
