"""Scenario parsing, deterministic orchestration and persistence."""

from atomlink.harness.pipeline import RunManifest, export_report, run, verify_manifest
from atomlink.harness.scenario import Scenario, ScenarioError, build_scenario, load_scenario

__all__ = ["RunManifest", "Scenario", "ScenarioError", "build_scenario", "export_report", "load_scenario", "run", "verify_manifest"]
