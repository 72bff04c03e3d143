"""Seeded binary classifiers: histogram GBDT and a logistic baseline."""
from .gbdt import GbdtParams, TrainedModel, train
from .logistic import LogisticModel, logistic_objective, train_logistic


def predict_proba(model, data):
    return model.predict_proba(data)


__all__ = ["GbdtParams", "TrainedModel", "train", "predict_proba",
           "LogisticModel", "train_logistic", "logistic_objective"]
