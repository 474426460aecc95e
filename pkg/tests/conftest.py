import numpy as np
import pytest

from univrse.backends.base import EntailmentVerdict
from univrse.errors import ScriptMiss
from univrse.perturb import ImageTensor


class RelationNli:
    """Entailment judge defined by an explicit symmetric relation on texts.

    Texts not covered by the relation are treated as non-equivalent (the
    production path never reaches the backend for identical strings).
    """

    def __init__(self, equivalent_pairs=(), *, strict=False):
        self._pairs = set()
        for a, b in equivalent_pairs:
            self._pairs.add((a, b))
            self._pairs.add((b, a))
        self._strict = strict

    @classmethod
    def from_partition(cls, groups):
        pairs = []
        for group in groups:
            members = list(group)
            for i, a in enumerate(members):
                for b in members[i + 1:]:
                    pairs.append((a, b))
        return cls(pairs)

    def check_entailment(self, premise, hypothesis):
        if premise == hypothesis or (premise, hypothesis) in self._pairs:
            return EntailmentVerdict(True, True)
        if self._strict:
            raise ScriptMiss(f"unscripted pair ({premise!r}, {hypothesis!r})")
        return EntailmentVerdict(False, False)


class QueueVlm:
    """Returns pre-built GenerationResults in call order; records requests."""

    def __init__(self, results):
        self._results = list(results)
        self.requests = []

    def generate(self, req):
        self.requests.append(req)
        if not self._results:
            raise ScriptMiss("queue exhausted")
        return self._results.pop(0)


@pytest.fixture
def relation_nli():
    return RelationNli


@pytest.fixture
def queue_vlm():
    return QueueVlm


def constant_image(value: float, height: int = 8, width: int = 8, channels: int = 1):
    return ImageTensor(np.full((height, width, channels), value, dtype=np.float64))


def gradient_image(height: int = 16, width: int = 16, channels: int = 1):
    ramp = np.linspace(0.0, 1.0, height * width * channels)
    return ImageTensor(ramp.reshape(height, width, channels))


@pytest.fixture
def const_image():
    return constant_image


@pytest.fixture
def grad_image():
    return gradient_image
