"""Central finite-difference gradient oracle for the training loss."""
import numpy as np
import torch


def finite_difference_check(model, loss_fn, eps=1e-5, sample_per_group=None, seed=0):
    """Compare autograd gradients against central differences.

    ``loss_fn`` must be a deterministic closure over the model parameters that
    returns the loss tensor. Returns a dict mapping parameter group name to
    the relative error between the sampled finite-difference gradient and the
    autograd gradient.
    """
    model.zero_grad()
    loss_fn().backward()
    autograd = {name: p.grad.detach().clone() for name, p in model.named_parameters()}

    rng = np.random.default_rng(seed)
    errors = {}
    with torch.no_grad():
        for name, param in model.named_parameters():
            flat = param.view(-1)
            n = flat.numel()
            if sample_per_group is None or n <= sample_per_group:
                indices = range(n)
            else:
                indices = sorted(rng.choice(n, size=sample_per_group, replace=False).tolist())
            fd_values, auto_values = [], []
            auto_flat = autograd[name].view(-1)
            for i in indices:
                original = flat[i].item()
                flat[i] = original + eps
                upper = float(loss_fn())
                flat[i] = original - eps
                lower = float(loss_fn())
                flat[i] = original
                fd_values.append((upper - lower) / (2 * eps))
                auto_values.append(float(auto_flat[i]))
            fd = np.asarray(fd_values)
            auto = np.asarray(auto_values)
            denom = max(np.linalg.norm(fd), np.linalg.norm(auto), 1e-12)
            errors[name] = float(np.linalg.norm(fd - auto) / denom)
    return errors
