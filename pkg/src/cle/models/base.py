"""The black-box classifier contract."""
import numpy as np

from ..errors import ModelFailure


class BlackBoxModel:
    """Opaque classifier: a batch of raw instances in, class probabilities out.

    Subclasses set ``modality`` (``text``, ``tabular`` or ``image``),
    ``classes`` (ordered labels) and ``reentrant``, and implement
    :meth:`_predict_proba`.
    """

    modality = "text"
    classes = ()
    reentrant = True

    def predict_proba(self, instances):
        instances = list(instances)
        if not instances:
            return np.zeros((0, len(self.classes)))
        probs = np.asarray(self._predict_proba(instances), dtype=np.float64)
        if probs.shape != (len(instances), len(self.classes)):
            raise ModelFailure(f"model returned shape {probs.shape}, expected "
                               f"{(len(instances), len(self.classes))}")
        return probs

    def _predict_proba(self, instances):
        raise NotImplementedError

    def predict(self, instances):
        return self.predict_proba(instances).argmax(axis=1)

    def gold_features(self):
        from ..errors import Unsupported
        raise Unsupported(f"{type(self).__name__} has no gold feature set")


class CallableModel(BlackBoxModel):
    """Wraps ``fn(list_of_instances) -> (n, c) array``."""

    def __init__(self, fn, classes, modality="text", reentrant=True):
        self.fn = fn
        self.classes = list(classes)
        self.modality = modality
        self.reentrant = reentrant

    def _predict_proba(self, instances):
        try:
            return self.fn(instances)
        except ModelFailure:
            raise
        except Exception as exc:  # noqa: BLE001 - user callables may raise anything
            raise ModelFailure(f"model callable failed: {exc}") from exc
