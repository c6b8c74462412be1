"""Small dense actor/critic networks.

Upper actor: one encoder shared across assets (each asset's return window ->
scalar logit), softmax over assets. Lower actor: sigmoid gate driven by the
upper weights, two dense layers over the gated, masked return window, masked
softmax, then a learnable convex blend with the upper agent's masked prior.
Critics see the masked return window and the masked action.
"""
from __future__ import annotations

import copy

import torch
from torch import nn

from ..errors import EmptyMask, ShapeMismatch

DTYPE = torch.float64
ROLES = ("upper-actor", "upper-critic", "lower-actor-1", "lower-actor-2", "critic-1", "critic-2")


def masked_softmax(logits, mask):
    """Softmax over entries where ``mask`` is set; the others come out exactly 0."""
    mask = mask.to(torch.bool)
    if not bool(mask.any(dim=-1).all()):
        raise EmptyMask("masked softmax over an empty mask")
    z = logits.masked_fill(~mask, float("-inf"))
    z = z - z.max(dim=-1, keepdim=True).values
    e = torch.exp(z)
    return e / e.sum(dim=-1, keepdim=True)


def gate(omega0, weight, bias):
    """Per-asset gating coefficients ``sigmoid(W @ omega0 + b)``, each in (0, 1)."""
    return torch.sigmoid(omega0 @ weight.T + bias)


def fuse_intra(prior, pred, lam_raw):
    lam = torch.sigmoid(lam_raw)
    return (1.0 - lam) * prior + lam * pred


def entropy(p, mask):
    """Natural-log entropy over on-mask entries."""
    mask = mask.to(torch.bool)
    safe = torch.where(mask, p, torch.ones_like(p))
    return -(torch.where(mask, p * torch.log(safe), torch.zeros_like(p))).sum(dim=-1)


class PolicyNet(nn.Module):
    """Base class: role tag and a frozen target copy updated only by :meth:`soft_update`/:meth:`hard_update`."""

    role = ""

    def make_target(self):
        target = copy.deepcopy(self)
        for p in target.parameters():
            p.requires_grad_(False)
        self.target = [target]  # list keeps it out of the module tree
        return target

    @property
    def target_net(self):
        return self.target[0]

    @torch.no_grad()
    def soft_update(self, tau: float):
        for tp, p in zip(self.target_net.parameters(), self.parameters()):
            tp.mul_(1.0 - tau).add_(tau * p)

    @torch.no_grad()
    def hard_update(self):
        for tp, p in zip(self.target_net.parameters(), self.parameters()):
            tp.copy_(p)


def _act(name):
    return {"tanh": nn.Tanh, "relu": nn.ReLU}[name]()


class UpperActor(PolicyNet):
    role = "upper-actor"

    def __init__(self, m: int, window: int, hidden: int = 32, activation: str = "tanh", zero_head: bool = True):
        super().__init__()
        self.m, self.window = m, window
        self.encoder = nn.Sequential(nn.Linear(window, hidden), _act(activation))
        self.head = nn.Linear(hidden, 1)
        if zero_head:
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)
        self.to(DTYPE)

    def logits(self, z):
        if z.shape[-2:] != (self.m, self.window):
            raise ShapeMismatch(f"expected (..., {self.m}, {self.window}), got {tuple(z.shape)}")
        return self.head(self.encoder(z)).squeeze(-1)

    def forward(self, z):
        return torch.softmax(self.logits(z), dim=-1)


class LowerActor(PolicyNet):
    """Returns ``(fused action, raw masked-softmax prediction, prior)``."""

    def __init__(self, m: int, window: int, hidden: int = 32, activation: str = "tanh", group: int = 1):
        super().__init__()
        self.role = f"lower-actor-{group}"
        self.m, self.window = m, window
        self.gate_weight = nn.Parameter(torch.zeros(m, m, dtype=DTYPE))
        self.gate_bias = nn.Parameter(torch.zeros(m, dtype=DTYPE))
        self.backbone = nn.Sequential(
            nn.Flatten(-2), nn.Linear(m * window, hidden), _act(activation), nn.Linear(hidden, m)
        )
        self.lam_raw = nn.Parameter(torch.zeros((), dtype=DTYPE))
        self.to(DTYPE)

    def forward(self, z, omega0, mask):
        if z.shape[-2:] != (self.m, self.window):
            raise ShapeMismatch(f"expected (..., {self.m}, {self.window}), got {tuple(z.shape)}")
        maskf = mask.to(DTYPE)
        g = gate(omega0, self.gate_weight, self.gate_bias)
        x = z * maskf.unsqueeze(-1) * g.unsqueeze(-1)
        pred = masked_softmax(self.backbone(x), mask)
        prior = masked_softmax(omega0, mask)
        return fuse_intra(prior, pred, self.lam_raw), pred, prior


class Critic(PolicyNet):
    def __init__(self, m: int, window: int, hidden: int = 32, activation: str = "tanh", role: str = "critic-1"):
        super().__init__()
        self.role = role
        self.m, self.window = m, window
        self.net = nn.Sequential(
            nn.Linear(m * window + m, hidden), _act(activation),
            nn.Linear(hidden, hidden), _act(activation),
            nn.Linear(hidden, 1),
        )
        self.to(DTYPE)

    def forward(self, z, action, mask):
        maskf = mask.to(DTYPE)
        x = torch.cat([(z * maskf.unsqueeze(-1)).flatten(-2), action * maskf], dim=-1)
        return self.net(x).squeeze(-1)


def upper_forward(net: UpperActor, z):
    return net(torch.as_tensor(z, dtype=DTYPE))


def lower_forward(net: LowerActor, z, omega0, mask):
    return net(torch.as_tensor(z, dtype=DTYPE), torch.as_tensor(omega0, dtype=DTYPE), torch.as_tensor(mask))[0]
