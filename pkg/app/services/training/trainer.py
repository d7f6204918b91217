"""
Bag-structured minibatch training.

Contexts of one attitude are grouped into bags of t_bag items; a minibatch
holds l_batch bags. The cost of a bag is the maximal cross-entropy loss among
its contexts and the training objective is the sum of bag costs. Parameters
are updated with AdaDelta after every minibatch.

Every `eval_every` epochs the macro-F1 over the training documents is
computed; training stops at the first evaluation reaching `stop_threshold`
or after `max_epochs`.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, List, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.services.autodiff.optim import AdaDelta
from app.services.autodiff.tensor import (
    Node,
    backward,
    getitem,
    is_finite,
    log,
    max_reduce,
    reshape,
    stack,
    sum_,
)
from app.services.embeddings.embedding_manager import InputEmbedding
from app.services.encoders.models import ContextModel
from app.services.evaluation.scoring import DocumentPairs, Predictor, Scale, evaluate_documents
from app.services.training.dataset import TrainingExample, group_by_attitude
from app.utils.context_parser import Context

logger = logging.getLogger(__name__)

LOSS_FLOOR = 1e-12


class TrainingDivergedError(ValueError):
    """A loss, gradient or parameter became non-finite."""


class TrainSchedule(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_epochs: int = Field(default=150, ge=1)
    eval_every: int = Field(default=10, ge=1)
    stop_threshold: float = Field(default=0.85, ge=0.0, le=1.0)
    stop_f1_scope: str = Field(default="mixture", pattern="^(mixture|main)$")
    l_batch: int = Field(default=2, ge=1)
    t_bag: int = Field(default=3, ge=1)
    rho: float = Field(default=0.95, gt=0.0, lt=1.0)
    epsilon: float = Field(default=1e-6, gt=0.0)

    @model_validator(mode="after")
    def check_eval_every(self):
        if self.eval_every > self.max_epochs:
            raise ValueError(f"eval_every ({self.eval_every}) exceeds max_epochs ({self.max_epochs})")
        return self


@dataclass
class Bag:
    items: List[TrainingExample]

    @property
    def label(self):
        return self.items[0].label


@dataclass
class Minibatch:
    bags: List[Bag]

    @property
    def examples(self) -> List[TrainingExample]:
        return [item for bag in self.bags for item in bag.items]


@dataclass
class EpochRecord:
    epoch: int
    split: str
    f1: float
    mean_cost: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.split}\t{self.f1:.6f}\t{self.mean_cost:.6f}\n"


@dataclass
class TrainingResult:
    epochs_run: int = 0
    stopped_early: bool = False
    history: List[EpochRecord] = field(default_factory=list)


def _cycle_pad(items: Sequence, size: int) -> List:
    return [items[k % len(items)] for k in range(size)]


def compose_bags(
    groups: Mapping[Hashable, Sequence[TrainingExample]],
    t_bag: int,
    rng: np.random.Generator,
) -> List[Bag]:
    """
    Split each attitude's contexts into bags of exactly t_bag items.

    The last, incomplete bag of an attitude is filled by cycling through that
    attitude's contexts from the start. Bag order is shuffled with `rng`.
    """
    if t_bag < 1:
        raise ValueError(f"t_bag must be positive, got {t_bag}")
    bags = []
    for key, items in groups.items():
        items = list(items)
        if not items:
            raise ValueError(f"Attitude {key} has no contexts")
        for start in range(0, len(items), t_bag):
            chunk = items[start:start + t_bag]
            if len(chunk) < t_bag:
                chunk = chunk + _cycle_pad(items, t_bag - len(chunk))
            bags.append(Bag(chunk))
    if not bags:
        raise ValueError("Cannot compose bags from an empty corpus")
    return [bags[i] for i in rng.permutation(len(bags))]


def compose_minibatches(bags: Sequence[Bag], l_batch: int) -> List[Minibatch]:
    """Consecutive groups of l_batch bags; the last group is filled from the first bags."""
    batches = []
    for start in range(0, len(bags), l_batch):
        chunk = list(bags[start:start + l_batch])
        if len(chunk) < l_batch:
            chunk = chunk + _cycle_pad(bags, l_batch - len(chunk))
        batches.append(Minibatch(chunk))
    return batches


def cross_entropy(probs: Node, y: int) -> Node:
    """-log(o_y) with o_y clamped at 1e-12."""
    classes = probs.shape[0]
    if not 0 <= y < classes:
        raise ValueError(f"Class id {y} outside [0, {classes})")
    return -log(getitem(probs, y), floor=LOSS_FLOOR)


def bag_cost(losses: Node, t_bag: int) -> Node:
    """Per-bag maximum over consecutive slices of t_bag losses."""
    n = losses.shape[0]
    if t_bag < 1 or n == 0 or n % t_bag:
        raise ValueError(f"{n} losses cannot be split into bags of {t_bag}")
    return max_reduce(reshape(losses, (n // t_bag, t_bag)), axis=1)


def model_predictor(model: ContextModel, scale: Scale) -> Predictor:
    labels = scale.labels
    if model.config.class_count != len(labels):
        raise ValueError(
            f"Model has {model.config.class_count} classes but the {scale.value}-scale task needs {len(labels)}"
        )

    def predict(context: Context, embedding: InputEmbedding):
        return labels[model.predict(embedding)]

    return predict


class Trainer:
    """Optimizes a ContextModel on bags of labeled contexts."""

    def __init__(self, model: ContextModel, schedule: TrainSchedule, scale: Scale, seed: int = 0):
        self.model = model
        self.schedule = schedule
        self.scale = scale
        self.seed = seed
        self.class_ids = {label: k for k, label in enumerate(scale.labels)}
        self.optimizer = AdaDelta(model.parameters(), rho=schedule.rho, epsilon=schedule.epsilon)
        self._dropout_rng = np.random.default_rng([seed, 1])

    def step(self, batch: Minibatch) -> float:
        """Forward, cost, backward and one optimizer update; returns the summed bag cost."""
        losses = []
        for example in batch.examples:
            probs, _ = self.model.forward(example.embedding, training=True, rng=self._dropout_rng)
            losses.append(cross_entropy(probs, self.class_ids[example.label]))
        total = sum_(bag_cost(stack(losses), self.schedule.t_bag))

        self.optimizer.zero_grad()
        backward(total)
        if not is_finite(total):
            raise TrainingDivergedError(
                f"Non-finite cost {float(total.value)}; first non-finite parameter: {self._first_non_finite()}"
            )
        for name, node in self.model.parameters().items():
            if node.grad is not None and not is_finite(node.grad):
                raise TrainingDivergedError(f"Non-finite gradient of parameter '{name}'")
        self.optimizer.step()
        bad = self._first_non_finite()
        if bad is not None:
            raise TrainingDivergedError(f"Parameter '{bad}' became non-finite after the update")
        return float(total.value)

    def _first_non_finite(self) -> Optional[str]:
        for name, node in self.model.parameters().items():
            if not is_finite(node.value) or (node.grad is not None and not is_finite(node.grad)):
                return name
        return None

    def fit(
        self,
        examples: Sequence[TrainingExample],
        eval_documents: Sequence[DocumentPairs],
        metrics_path: Optional[Path] = None,
        on_evaluation: Optional[Callable[[EpochRecord], None]] = None,
    ) -> TrainingResult:
        schedule = self.schedule
        groups = group_by_attitude(examples)
        logger.info(
            f"Training {self.model.kind.value} on {len(examples)} contexts of {len(groups)} attitudes "
            f"for at most {schedule.max_epochs} epochs"
        )
        log_file = None
        if metrics_path is not None:
            metrics_path = Path(metrics_path)
            metrics_path.parent.mkdir(parents=True, exist_ok=True)
            log_file = open(metrics_path, "w", encoding="utf-8")

        result = TrainingResult()
        try:
            for epoch in range(1, schedule.max_epochs + 1):
                bags = compose_bags(groups, schedule.t_bag, np.random.default_rng([self.seed, epoch]))
                costs = [self.step(batch) for batch in compose_minibatches(bags, schedule.l_batch)]
                result.epochs_run = epoch
                if epoch % schedule.eval_every:
                    continue

                mean_cost = float(np.mean(costs)) / schedule.l_batch
                f1, _, _ = evaluate_documents(model_predictor(self.model, self.scale), eval_documents, self.scale)
                record = EpochRecord(epoch, "train", f1, mean_cost)
                result.history.append(record)
                logger.info(f"Epoch {epoch}: train F1 {f1:.4f}, mean bag cost {mean_cost:.4f}")
                if log_file is not None:
                    log_file.write(record.line())
                    log_file.flush()
                if on_evaluation is not None:
                    on_evaluation(record)
                if f1 >= schedule.stop_threshold:
                    result.stopped_early = True
                    logger.info(f"Stopping at epoch {epoch}: F1 {f1:.4f} >= {schedule.stop_threshold}")
                    break
        finally:
            if log_file is not None:
                log_file.close()
        return result
