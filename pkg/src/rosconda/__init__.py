"""A miniature cross-platform package manager.

Match-spec parsing, channel indexes with strict priority, an optimizing
dependency solver, relocatable installs, environment export, multi-platform
lockfiles, and recipe generation from ROS ``package.xml`` manifests.
"""
from .channels import (
    ChannelIndex,
    MergedIndex,
    PackageRecord,
    PlatformProfile,
    VirtualPackage,
    detect_virtual_packages,
    load_index,
    merge_channels,
)
from .solver import Solution, SolveRequest, UnsatExplanation, brute_force_solve, encode, solve
from .verspec import MatchSpec, Version, compare_versions, parse_matchspec, parse_version, spec_matches

__all__ = [
    "ChannelIndex",
    "MatchSpec",
    "MergedIndex",
    "PackageRecord",
    "PlatformProfile",
    "Solution",
    "SolveRequest",
    "UnsatExplanation",
    "Version",
    "VirtualPackage",
    "brute_force_solve",
    "compare_versions",
    "detect_virtual_packages",
    "encode",
    "load_index",
    "merge_channels",
    "parse_matchspec",
    "parse_version",
    "solve",
    "spec_matches",
]

__version__ = "0.1.0"
