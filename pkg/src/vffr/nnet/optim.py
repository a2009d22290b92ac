"""Bias-corrected Adam."""
from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, params: dict, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        """One update; parameters without a gradient are treated as g = 0."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            v = self.v[k] = b2 * self.v[k] + (1.0 - b2) * (g * g)
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state(self) -> dict:
        return {"t": self.t, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps}

    def load_state(self, state: dict, m: dict, v: dict):
        self.t = int(state["t"])
        self.lr, self.beta1, self.beta2, self.eps = (
            float(state[k]) for k in ("lr", "beta1", "beta2", "eps"))
        for k in self.params:
            self.m[k] = np.asarray(m[k], dtype=np.float64).copy()
            self.v[k] = np.asarray(v[k], dtype=np.float64).copy()
