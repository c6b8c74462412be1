"""DDPG losses.

A batch is a dict of float64 tensors with keys ``z``, ``action``, ``reward``,
``next_z``, ``terminal``, ``mask``, ``next_mask`` and, for lower agents,
``omega0`` and ``next_omega0``. Upper-agent batches use all-ones masks.
"""
from __future__ import annotations

import torch

from ..errors import EmptyBatch
from .nets import LowerActor, entropy


def policy_outputs(actor, z, mask, omega0=None):
    """``(action, raw prediction, prior)``; the upper actor has no prior."""
    if isinstance(actor, LowerActor):
        return actor(z, omega0, mask)
    a = actor(z)
    return a, a, None


def _check(batch):
    if batch["reward"].numel() == 0:
        raise EmptyBatch("empty batch")


def critic_loss(batch, critic, target_critic, target_actor, gamma: float):
    """Mean squared TD error; terminal transitions drop the bootstrap term."""
    _check(batch)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    with torch.no_grad():
        a_next = policy_outputs(target_actor, batch["next_z"], batch["next_mask"], batch.get("next_omega0"))[0]
        q_next = target_critic(batch["next_z"], a_next, batch["next_mask"])
        y = batch["reward"] + gamma * (1.0 - batch["terminal"]) * q_next
    q = critic(batch["z"], batch["action"], batch["mask"])
    return ((y - q) ** 2).mean()


def actor_loss(batch, actor, critic, beta_ent: float = 0.01, alpha_imit: float = 0.1, prior=None):
    """``-mean Q - beta_ent * H + alpha_imit * imit``; returns ``(loss, imit)``.

    ``imit`` compares the detached raw prediction with the detached prior, so it
    shifts the loss value without touching any gradient.
    """
    _check(batch)
    a, pred, own_prior = policy_outputs(actor, batch["z"], batch["mask"], batch.get("omega0"))
    q = critic(batch["z"], a, batch["mask"])
    h = entropy(a, batch["mask"])
    prior = own_prior if prior is None else prior
    if prior is None:
        imit = torch.zeros((), dtype=a.dtype)
    else:
        imit = ((pred.detach() - prior.detach()) ** 2).sum(dim=-1).mean()
    loss = -q.mean() - beta_ent * h.mean() + alpha_imit * imit
    return loss, imit
