# third-party imports
import numpy as np
import torch


def as_tensor(x):
    """float64 CPU tensor view of an array-like (float64 keeps gradient checks meaningful)."""
    if isinstance(x, torch.Tensor):
        return x.to(dtype=torch.float64)
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def detach(x):
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy()
    else:
        return [detach(elem) for elem in x]


def value_and_grad(fn, *params):
    """Evaluates `fn(*params)` and its gradient with respect to every parameter.

    The parameters are not modified: gradients are taken on fresh leaf copies.

    Returns:
        (float, tuple of torch.Tensor): the value and one gradient per parameter
    """
    leaves = [p.detach().clone().requires_grad_(True) for p in params]
    value = fn(*leaves)
    grads = torch.autograd.grad(value, leaves)
    return float(value.detach()), tuple(g.detach() for g in grads)


def grad_norm(grads):
    return float(torch.sqrt(sum((g * g).sum() for g in grads)))
