"""Face pixelation for live video streams.

Faces are clustered into identities segment by segment, linked into
trajectories, repaired across detector misses with a two-sample test, and
blurred everywhere except on the streamer.
"""
from .config import Config, load_config
from .elr import two_sample_test
from .evaluator import evaluate
from .model import BBox, FrameStream, Trajectory
from .piap import PIAP, positioned_ap
from .pipeline import run_pipeline
from .synth import Scenario, random_scenario, synth_generate

__all__ = ["BBox", "Config", "FrameStream", "PIAP", "Scenario", "Trajectory", "evaluate",
           "load_config", "positioned_ap", "random_scenario", "run_pipeline", "synth_generate",
           "two_sample_test"]
__version__ = "0.1.0"
