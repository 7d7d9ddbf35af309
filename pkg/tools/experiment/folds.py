"""
Cross-validation fold planning at the DA level.

Both paraphrases of a DA always land in the same partition, so a DA is never
split between training and test.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from core.errors import FoldError


@dataclass
class Fold:
    """Index lists into the corpus for one fold."""
    index: int
    train: List[int]
    validation: List[int]
    test: List[int]

    @property
    def fit(self) -> List[int]:
        """Training DAs minus the ones held out for validation."""
        held_out = set(self.validation)
        return [i for i in self.train if i not in held_out]

    def to_dict(self) -> Dict:
        return {"index": self.index, "train": self.train, "validation": self.validation, "test": self.test}


@dataclass
class FoldPlan:
    """All folds of one cross-validation run."""
    seed: int
    folds: List[Fold] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.folds)

    def to_dict(self) -> Dict:
        return {"seed": self.seed, "folds": [f.to_dict() for f in self.folds]}


def make_folds(corpus: Sequence, folds: int, validation_per_fold: int, seed: int) -> FoldPlan:
    """Seeded shuffle of DA indices with round-robin fold assignment.

    Raises:
        FoldError: if there are fewer DAs than folds, fewer than two folds,
            or a fold's training part cannot spare the validation DAs
    """
    n_das = len(corpus)
    if folds < 2:
        raise FoldError("Cross-validation needs at least two folds", actual=folds)
    if n_das < folds:
        raise FoldError("Corpus has fewer DAs than folds", expected=f">= {folds}", actual=n_das)

    rng = np.random.default_rng(seed)
    order = rng.permutation(n_das)
    plan = FoldPlan(seed=seed)
    for k in range(folds):
        test = sorted(int(i) for i in order[k::folds])
        test_set = set(test)
        train = [i for i in range(n_das) if i not in test_set]
        if validation_per_fold >= len(train):
            raise FoldError("Not enough training DAs to hold out validation", field=f"fold {k}",
                            expected=f"< {len(train)}", actual=validation_per_fold)
        fold_rng = np.random.default_rng([seed, k])
        validation = sorted(int(i) for i in fold_rng.choice(train, size=validation_per_fold, replace=False))
        plan.folds.append(Fold(index=k, train=train, validation=validation, test=test))
    return plan


def holdout_split(n_das: int, validation: int, seed: int) -> Fold:
    """Train/validation split of a whole corpus, for models trained outside cross-validation."""
    if validation >= n_das:
        raise FoldError("Not enough DAs to hold out validation", expected=f"< {n_das}", actual=validation)
    rng = np.random.default_rng(seed)
    held_out = sorted(int(i) for i in rng.choice(n_das, size=validation, replace=False))
    return Fold(index=-1, train=list(range(n_das)), validation=held_out, test=[])


def fold_seed(seed: int, fold: int) -> int:
    """Deterministic training seed for one fold."""
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def check_partition(plan: FoldPlan, n_das: int) -> None:
    """Raise FoldError unless the test sets are disjoint and cover every DA."""
    seen: Dict[int, int] = {}
    for fold in plan.folds:
        for i in fold.test:
            if i in seen:
                raise FoldError("DA appears in two test sets", actual=i,
                                suggestions=[f"folds {seen[i]} and {fold.index}"])
            seen[i] = fold.index
    if len(seen) != n_das:
        raise FoldError("Test sets do not cover the corpus", expected=n_das, actual=len(seen))
