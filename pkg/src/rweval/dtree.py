"""Boolean-feature decision trees: inference, CART training, and selection.

Trees here are deliberately simple: internal nodes test one boolean feature
(absent features read as false), leaves carry FAIL/PASS sample counts, and
the predicted class is the leaf majority with ties going to FAIL. Training
is greedy CART over boolean splits with exact (rational) Gini comparisons so
results never depend on float rounding; feature ties break by name.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import DegenerateSplit, EmptyMatrix, SchemaError
from .features import FeatureMatrix, FeatureVector, Label, MatrixRow
from .util import round_half_up


class Task(Enum):
    NOP = "NOP"
    AFL = "AFL"


@dataclass(frozen=True)
class Leaf:
    fail_count: float
    pass_count: float


@dataclass(frozen=True)
class Internal:
    feature: str
    when_false: "TreeNode"
    when_true: "TreeNode"


TreeNode = Union[Leaf, Internal]


@dataclass(frozen=True)
class DecisionTreeModel:
    tool_name: str
    task: Task
    feature_order: tuple[str, ...]
    root: TreeNode
    reported_accuracy: float | None = None

    def __post_init__(self):
        declared = set(self.feature_order)
        for node, _ in _walk(self.root):
            if isinstance(node, Internal) and node.feature not in declared:
                raise ValueError(
                    f"tree tests feature {node.feature!r} not in feature_order"
                )
            if isinstance(node, Leaf) and (node.fail_count < 0 or node.pass_count < 0):
                raise ValueError("leaf counts must be non-negative")


def _walk(root: TreeNode):
    """Yield (node, path) pairs; rejects cyclic structures."""
    on_path: set[int] = set()

    def rec(node: TreeNode, path: str):
        if id(node) in on_path:
            raise ValueError(f"cyclic tree structure at {path}")
        yield node, path
        if isinstance(node, Internal):
            on_path.add(id(node))
            yield from rec(node.when_false, path + ".false")
            yield from rec(node.when_true, path + ".true")
            on_path.discard(id(node))

    yield from rec(root, "root")


def leaf_count_total(model: DecisionTreeModel) -> float:
    """Sum of FAIL+PASS counts over all leaves (the training-sample total)."""
    return sum(
        node.fail_count + node.pass_count
        for node, _ in _walk(model.root)
        if isinstance(node, Leaf)
    )


@dataclass(frozen=True)
class Prediction:
    outcome: Label
    confidence: float
    leaf_counts: tuple[float, float]  # (fail_count, pass_count)


def predict(model: DecisionTreeModel, fv: FeatureVector) -> Prediction:
    """Route a feature vector to a leaf. Ties at the leaf predict FAIL."""
    node = model.root
    while isinstance(node, Internal):
        node = node.when_true if fv.get(node.feature) else node.when_false
    total = node.fail_count + node.pass_count
    outcome = Label.PASS if node.pass_count > node.fail_count else Label.FAIL
    confidence = max(node.fail_count, node.pass_count) / total if total > 0 else 0.0
    return Prediction(
        outcome=outcome,
        confidence=confidence,
        leaf_counts=(node.fail_count, node.pass_count),
    )


def train_cart(
    matrix: FeatureMatrix,
    max_depth: int = 6,
    min_leaf: int = 1,
    seed: int = 0,
    *,
    tool_name: str = "",
    task: Task = Task.AFL,
) -> DecisionTreeModel:
    """Greedy CART with Gini impurity over boolean splits.

    At each node the feature minimizing the weighted child Gini is chosen,
    with ties broken by lexicographic feature name; a node splits whenever
    any split keeps both children at min_leaf or more, even at zero Gini
    gain (XOR-style targets need the zero-gain split to become separable one
    level down). The procedure is fully deterministic; ``seed`` is accepted
    for interface symmetry but never consulted.
    """
    if len(matrix.feature_names) < 1:
        raise EmptyMatrix("cannot train on a matrix with no feature columns")
    if len(matrix.rows) < 2:
        raise ValueError("need at least 2 rows to train")
    if max_depth < 1 or min_leaf < 1:
        raise ValueError("max_depth and min_leaf must be at least 1")

    # iterate candidates in name order so the first best wins ties by name
    ordered = sorted(range(len(matrix.feature_names)), key=lambda i: matrix.feature_names[i])

    def counts(rows: list[MatrixRow]) -> tuple[int, int]:
        fails = sum(1 for r in rows if r.label is Label.FAIL)
        return fails, len(rows) - fails

    def gini_term(fails: int, passes: int) -> Fraction:
        n = fails + passes
        return Fraction(n * n - fails * fails - passes * passes, n)

    def build(rows: list[MatrixRow], depth: int) -> TreeNode:
        fails, passes = counts(rows)
        if (
            fails == 0
            or passes == 0
            or depth >= max_depth
            or len(rows) < 2 * min_leaf
        ):
            return Leaf(float(fails), float(passes))

        best: tuple[Fraction, int] | None = None
        for col in ordered:
            t_fails = t_passes = 0
            n_true = 0
            for r in rows:
                if r.values[col]:
                    n_true += 1
                    if r.label is Label.FAIL:
                        t_fails += 1
                    else:
                        t_passes += 1
            n_false = len(rows) - n_true
            if n_true < min_leaf or n_false < min_leaf:
                continue
            score = gini_term(fails - t_fails, passes - t_passes) + gini_term(
                t_fails, t_passes
            )
            if best is None or score < best[0]:
                best = (score, col)
        if best is None:
            return Leaf(float(fails), float(passes))

        col = best[1]
        false_rows = [r for r in rows if not r.values[col]]
        true_rows = [r for r in rows if r.values[col]]
        return Internal(
            feature=matrix.feature_names[col],
            when_false=build(false_rows, depth + 1),
            when_true=build(true_rows, depth + 1),
        )

    return DecisionTreeModel(
        tool_name=tool_name,
        task=task,
        feature_order=matrix.feature_names,
        root=build(list(matrix.rows), 0),
    )


def select_features(
    matrix: FeatureMatrix,
    k: int = 8,
    epochs: int = 500,
    step: float = 0.1,
    reg: float = 0.01,
    seed: int = 0,
) -> list[str]:
    """Rank features by a linear max-margin classifier and keep the top k.

    Minimizes L2-regularized hinge loss over {-1,+1} labels (PASS=+1) with
    full-batch subgradient descent from zero weights, learning rate
    step/sqrt(t) at epoch t. Deterministic; ``seed`` is accepted for
    interface symmetry but the zero initialization leaves it unused.
    Returns the k features with largest absolute weight, descending, ties
    by name.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not matrix.rows:
        raise EmptyMatrix("cannot select features from an empty matrix")

    x = np.array([[1.0 if v else 0.0 for v in r.values] for r in matrix.rows])
    y = np.array([1.0 if r.label is Label.PASS else -1.0 for r in matrix.rows])
    n, d = x.shape

    w = np.zeros(d)
    b = 0.0
    for t in range(1, epochs + 1):
        margins = y * (x @ w + b)
        viol = margins < 1.0
        grad_w = reg * w - (y[viol] @ x[viol]) / n
        grad_b = -float(np.sum(y[viol])) / n
        lr = step / math.sqrt(t)
        w = w - lr * grad_w
        b = b - lr * grad_b

    ranked = sorted(
        zip(matrix.feature_names, np.abs(w)), key=lambda p: (-p[1], p[0])
    )
    return [name for name, _ in ranked[:k]]


def split_train_test(
    matrix: FeatureMatrix, train_fraction: float, seed: int = 0
) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Seeded shuffle, then the first ceil(n * train_fraction) rows train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be strictly between 0 and 1")
    n = len(matrix.rows)
    # Fraction-of-string keeps ceil(10 * 0.7) == 7 rather than a float wobble.
    n_train = math.ceil(n * Fraction(str(train_fraction)))
    if n_train <= 0 or n_train >= n:
        raise DegenerateSplit(
            f"{n} rows at train_fraction={train_fraction} leaves an empty side"
        )
    order = list(range(n))
    random.Random(seed).shuffle(order)
    train = tuple(matrix.rows[i] for i in order[:n_train])
    test = tuple(matrix.rows[i] for i in order[n_train:])
    return (
        FeatureMatrix(matrix.feature_names, train),
        FeatureMatrix(matrix.feature_names, test),
    )


@dataclass(frozen=True)
class Accuracy:
    ratio: float  # raw fraction correct in [0, 1]
    percent: float  # ratio * 100 rounded half-up to 2 decimals

    def __str__(self) -> str:
        return f"{self.percent:.2f}%"


def accuracy(model: DecisionTreeModel, matrix: FeatureMatrix) -> Accuracy:
    if not matrix.rows:
        raise EmptyMatrix("cannot score an empty matrix")
    hits = 0
    for row in matrix.rows:
        fv = FeatureVector(dict(zip(matrix.feature_names, row.values)))
        if predict(model, fv).outcome is row.label:
            hits += 1
    ratio = hits / len(matrix.rows)
    return Accuracy(ratio=ratio, percent=round_half_up(ratio * 100.0))


# --- serialization ---------------------------------------------------------
#
# {"tool": str, "task": "NOP"|"AFL", "features": [str], "accuracy": num|null,
#  "root": {"feature": str, "false": <node>, "true": <node>}
#        | {"fail": num, "pass": num}}


def serialize_tree(model: DecisionTreeModel) -> str:
    def node_obj(node: TreeNode):
        if isinstance(node, Leaf):
            return {"fail": node.fail_count, "pass": node.pass_count}
        return {
            "feature": node.feature,
            "false": node_obj(node.when_false),
            "true": node_obj(node.when_true),
        }

    return json.dumps(
        {
            "tool": model.tool_name,
            "task": model.task.value,
            "features": list(model.feature_order),
            "accuracy": model.reported_accuracy,
            "root": node_obj(model.root),
        },
        indent=2,
    )


def parse_tree(source: str | dict) -> DecisionTreeModel:
    """Inverse of serialize_tree. Rejects unknown fields, bad counts,
    undeclared features, and cyclic node objects, reporting the node path."""
    obj = json.loads(source) if isinstance(source, str) else source
    if not isinstance(obj, dict):
        raise SchemaError("model must be a JSON object")
    unknown = set(obj) - {"tool", "task", "features", "accuracy", "root"}
    if unknown:
        raise SchemaError(f"unknown model fields {sorted(unknown)}")
    for key in ("tool", "task", "features", "root"):
        if key not in obj:
            raise SchemaError(f"missing model field {key!r}")
    if not isinstance(obj["tool"], str):
        raise SchemaError("'tool' must be a string")
    try:
        task = Task(obj["task"])
    except ValueError:
        raise SchemaError(f"'task' must be NOP or AFL, got {obj['task']!r}") from None
    feats = obj["features"]
    if not isinstance(feats, list) or not all(isinstance(f, str) for f in feats):
        raise SchemaError("'features' must be a list of strings")
    acc = obj.get("accuracy")
    if acc is not None and not isinstance(acc, (int, float)):
        raise SchemaError("'accuracy' must be a number or null")

    declared = set(feats)
    seen_on_path: set[int] = set()

    def node_from(o, path: str) -> TreeNode:
        if not isinstance(o, dict):
            raise SchemaError("node must be an object", path)
        if id(o) in seen_on_path:
            raise SchemaError("cyclic node structure", path)
        keys = set(o)
        if keys == {"fail", "pass"}:
            fail, pss = o["fail"], o["pass"]
            for name, v in (("fail", fail), ("pass", pss)):
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise SchemaError(f"leaf {name!r} count must be a number", path)
                if v < 0:
                    raise SchemaError(f"leaf {name!r} count must be non-negative", path)
            return Leaf(float(fail), float(pss))
        if keys == {"feature", "false", "true"}:
            if not isinstance(o["feature"], str):
                raise SchemaError("'feature' must be a string", path)
            if o["feature"] not in declared:
                raise SchemaError(
                    f"feature {o['feature']!r} not declared in 'features'", path
                )
            seen_on_path.add(id(o))
            node = Internal(
                feature=o["feature"],
                when_false=node_from(o["false"], path + ".false"),
                when_true=node_from(o["true"], path + ".true"),
            )
            seen_on_path.discard(id(o))
            return node
        raise SchemaError(
            "node must have exactly {fail, pass} or {feature, false, true}, "
            f"got {sorted(keys)}",
            path,
        )

    return DecisionTreeModel(
        tool_name=obj["tool"],
        task=task,
        feature_order=tuple(feats),
        root=node_from(obj["root"], "root"),
        reported_accuracy=None if acc is None else float(acc),
    )
