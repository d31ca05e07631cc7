from .train import LearningCurve, TrainConfig, gradient_check, run_experiment

__all__ = ["LearningCurve", "TrainConfig", "gradient_check", "run_experiment"]
