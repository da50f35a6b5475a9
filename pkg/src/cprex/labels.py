"""Relation label inventory: one negative class plus a configurable positive set."""

from __future__ import annotations

NEG = "NEG"

DEFAULT_POSITIVE_LABELS = ("CPR:3", "CPR:4", "CPR:5", "CPR:6", "CPR:9")


class LabelSet:
    """Fixed-order label inventory. NEG is always index 0; positives follow in the
    order given. The order is part of every trained model's contract, so it never
    changes after construction."""

    def __init__(self, positive: tuple[str, ...] = DEFAULT_POSITIVE_LABELS):
        positive = tuple(positive)
        if NEG in positive:
            raise ValueError("positive label set must not contain NEG")
        if len(set(positive)) != len(positive):
            raise ValueError("duplicate positive labels: %r" % (positive,))
        if not positive:
            raise ValueError("positive label set must not be empty")
        self.labels: tuple[str, ...] = (NEG,) + positive
        self._index = {lab: i for i, lab in enumerate(self.labels)}

    @property
    def positives(self) -> tuple[str, ...]:
        return self.labels[1:]

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError("unknown relation label %r (expected one of %r)" % (label, self.labels))

    def label(self, index: int) -> str:
        return self.labels[index]

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelSet) and self.labels == other.labels

    def __repr__(self) -> str:
        return "LabelSet(%s)" % ", ".join(self.labels)


DEFAULT_LABELS = LabelSet()
