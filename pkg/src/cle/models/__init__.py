"""Built-in classifiers and external-model adapters."""
from .base import BlackBoxModel, CallableModel
from .external import HttpModel, SubprocessModel
from .knn import KNNModel, train_knn
from .logreg import LogisticRegressionModel, train_logreg
from .toy import PlantedTextModel, ToySentimentModel
from .tree import ForestModel, TreeModel, oob_accuracy, train_forest, train_tree


def gold_features(model):
    """Features a self-interpretable model depends on (logreg and trees only)."""
    return model.gold_features()


__all__ = [
    "BlackBoxModel", "CallableModel", "HttpModel", "SubprocessModel", "KNNModel",
    "LogisticRegressionModel", "TreeModel", "ForestModel", "PlantedTextModel",
    "ToySentimentModel", "train_knn", "train_logreg", "train_tree", "train_forest", "oob_accuracy",
    "gold_features",
]
