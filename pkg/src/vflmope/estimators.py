"""Scikit-learn style wrappers around the functional heads.

``X`` is the [n, total_dim] concatenation of the participant blocks in
canonical order (active last); ``presence`` optionally marks which blocks a
row actually has, and anything marked absent is zero-padded before training
or prediction regardless of what the caller left in those columns.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from . import baselines, mope


def _check_inputs(X, presence, block_dims):
    X = check_array(X, dtype=np.float64)
    dims = tuple(int(d) for d in (block_dims if block_dims is not None else (X.shape[1],)))
    layout = mope.BlockLayout(dims)
    if layout.total_dim != X.shape[1]:
        raise ValueError(
            f"X has {X.shape[1]} columns but block_dims sum to {layout.total_dim}"
        )
    if presence is None:
        presence = np.ones((X.shape[0], layout.n_participants), dtype=bool)
    else:
        presence = np.asarray(presence, dtype=bool)
        if presence.shape != (X.shape[0], layout.n_participants):
            raise ValueError(
                f"presence must be [n, {layout.n_participants}], got {presence.shape}"
            )
    blocks = [X[:, layout.slice_of(k)] for k in range(layout.n_participants)]
    return mope.stack_padded(blocks, presence, layout), blocks, presence, layout


class MopeClassifier(BaseEstimator, ClassifierMixin):
    """Mixture-of-predefined-experts classifier over vertical blocks.

    Parameters
    ----------
    block_dims : tuple of int or None
        Width of each participant's block, active party last. None treats
        all of X as a single active block.
    router_hidden : int
        Hidden width of the gating network.
    epochs, batch_size, lr : training hyperparameters.
    seed : int, drives init and shuffling.
    """

    def __init__(self, block_dims=None, router_hidden=128, epochs=50,
                 batch_size=256, lr=1e-4, seed=0):
        self.block_dims = block_dims
        self.router_hidden = router_hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def fit(self, X, y, presence=None):
        feats, _, _, layout = _check_inputs(X, presence, self.block_dims)
        y = np.asarray(y)
        if y.shape != (feats.shape[0],):
            raise ValueError(f"y must have shape ({feats.shape[0]},), got {y.shape}")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least two classes in y")
        head = mope.init_mope_head(layout, self.classes_.shape[0], seed=self.seed,
                                   router_hidden=self.router_hidden)
        cfg = mope.TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                               lr=self.lr, seed=self.seed)
        self.head_, self.loss_trace_ = mope.train_mope(head, feats, encoded, cfg)
        self.n_features_in_ = feats.shape[1]
        return self

    def _fitted_head(self) -> mope.MopeHead:
        if not hasattr(self, "head_"):
            raise NotFittedError("this MopeClassifier instance is not fitted yet")
        return self.head_

    def predict_proba(self, X, presence=None):
        head = self._fitted_head()
        feats, _, _, _ = _check_inputs(X, presence, self.block_dims)
        return mope.mope_forward(head, feats).probs

    def predict(self, X, presence=None):
        probs = self.predict_proba(X, presence)
        return self.classes_[np.argmax(probs, axis=1)]

    def gates(self, X, presence=None):
        head = self._fitted_head()
        feats, _, _, _ = _check_inputs(X, presence, self.block_dims)
        return mope.mope_forward(head, feats).gates

    def contributions(self, X, presence=None):
        """Per-sample contribution share of every participant, [n, K]."""
        head = self._fitted_head()
        gates = self.gates(X, presence)
        out = np.empty((gates.shape[0], head.layout.n_participants))
        for i in range(gates.shape[0]):
            for k in range(head.layout.n_participants):
                out[i, k] = mope.contribution(gates[i], head.subsets, k)
        return out


class SplitBaselineClassifier(BaseEstimator, ClassifierMixin):
    """Reference heads behind the same block/presence interface.

    ``kind`` is one of "local", "splitnn-concat", "splitnn-mean".
    """

    def __init__(self, kind="splitnn-concat", block_dims=None, epochs=50,
                 batch_size=256, lr=1e-4, seed=0):
        self.kind = kind
        self.block_dims = block_dims
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def fit(self, X, y, presence=None):
        _, blocks, presence, layout = _check_inputs(X, presence, self.block_dims)
        y = np.asarray(y)
        if y.shape != (blocks[0].shape[0],):
            raise ValueError(f"y must have shape ({blocks[0].shape[0]},), got {y.shape}")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least two classes in y")
        head = baselines.init_baseline(self.kind, layout, self.classes_.shape[0],
                                       seed=self.seed)
        cfg = mope.TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                               lr=self.lr, seed=self.seed)
        self.head_, self.loss_trace_ = baselines.train_baseline(
            head, blocks, presence, encoded, cfg)
        self.n_features_in_ = layout.total_dim
        return self

    def predict_proba(self, X, presence=None):
        if not hasattr(self, "head_"):
            raise NotFittedError("this SplitBaselineClassifier instance is not fitted yet")
        _, blocks, presence, _ = _check_inputs(X, presence, self.block_dims)
        return baselines.baseline_forward_matrix(self.head_, blocks, presence)

    def predict(self, X, presence=None):
        probs = self.predict_proba(X, presence)
        return self.classes_[np.argmax(probs, axis=1)]
