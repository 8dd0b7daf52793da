"""Probes that read toy ground truth back out of generated images.

``ContentProbe`` recovers (shape, center) and is trained on both toy domains
so its answer does not depend on rendering style. ``DomainProbe`` is a linear
classifier separating source-style from target-style images.
"""

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.linear_model import LogisticRegression
from sklearn.utils.validation import check_is_fitted
from torch import nn

from ._validation import as_image_batch
from .data import SHAPES


class _ContentNet(nn.Module):
    def __init__(self, n_shapes):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Conv2d(3, 16, 3, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(8), nn.Flatten(), nn.Linear(32 * 64, 128), nn.ReLU(),
        )
        self.shape_head = nn.Linear(128, n_shapes)
        self.center_head = nn.Linear(128, 2)

    def forward(self, x):
        h = self.trunk(x)
        return self.shape_head(h), self.center_head(h)


class ContentProbe(BaseEstimator):
    """Small CNN predicting shape class and normalized center of a toy image."""

    def __init__(self, epochs=12, batch_size=64, lr=2e-3, center_tol=0.08, seed=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.center_tol = center_tol
        self.seed = seed

    def fit(self, X, shapes, centers):
        X = as_image_batch(X)
        shapes = torch.as_tensor(np.asarray(shapes), dtype=torch.long)
        centers = torch.as_tensor(np.asarray(centers), dtype=torch.float32)
        with torch.random.fork_rng():
            torch.manual_seed(self.seed)
            net = _ContentNet(len(SHAPES))
        opt = torch.optim.Adam(net.parameters(), lr=self.lr)
        gen = torch.Generator().manual_seed(self.seed)
        for _ in range(self.epochs):
            order = torch.randperm(len(X), generator=gen)
            for i in range(0, len(X), self.batch_size):
                idx = order[i:i + self.batch_size]
                logits, pred_c = net(X[idx])
                loss = F.cross_entropy(logits, shapes[idx]) + 20 * F.mse_loss(pred_c, centers[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
        self.net_ = net.eval()
        return self

    @torch.no_grad()
    def predict(self, X):
        """Return ``(shape_index, center)`` arrays."""
        check_is_fitted(self, "net_")
        X = as_image_batch(X)
        logits, centers = zip(*(self.net_(X[i:i + 256]) for i in range(0, len(X), 256)))
        return torch.cat(logits).argmax(1).numpy(), torch.cat(centers).numpy()

    def match(self, A, B):
        """Per-pair agreement: same shape and centers within ``center_tol``."""
        sa, ca = self.predict(A)
        sb, cb = self.predict(B)
        return (sa == sb) & (np.linalg.norm(ca - cb, axis=1) < self.center_tol)

    def score(self, X, shapes, centers):
        s, c = self.predict(X)
        ok = (s == np.asarray(shapes)) & (np.linalg.norm(c - np.asarray(centers), axis=1) < self.center_tol)
        return float(ok.mean())


class DomainProbe(ClassifierMixin, BaseEstimator):
    """Logistic regression on raw pixels; label 1 means target domain."""

    def __init__(self, C=1.0, max_iter=2000):
        self.C = C
        self.max_iter = max_iter

    @staticmethod
    def _flat(X):
        return as_image_batch(X).detach().cpu().numpy().reshape(len(X), -1)

    def fit(self, X, y):
        self.clf_ = LogisticRegression(C=self.C, max_iter=self.max_iter).fit(self._flat(X), y)
        self.classes_ = self.clf_.classes_
        return self

    def predict(self, X):
        check_is_fitted(self, "clf_")
        return self.clf_.predict(self._flat(X))
