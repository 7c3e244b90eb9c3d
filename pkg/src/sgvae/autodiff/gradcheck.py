from __future__ import annotations

import torch


def grad_check(fn, inputs, eps=1e-5, atol=1e-12):
    """Worst relative error between tape gradients and central differences.

    ``fn`` maps the tensors in ``inputs`` to a scalar (non-scalar outputs are
    contracted with a fixed random cotangent). Errors are measured per input
    tensor as max|g_tape - g_fd| / max(max|g_tape|, max|g_fd|), so entries far
    below the tensor's gradient scale do not blow up the ratio.
    """
    inputs = [x.detach().clone().requires_grad_(True) for x in inputs]
    probe = fn(*inputs)
    if probe.dim() > 0:
        gen = torch.Generator().manual_seed(1234)
        cot = torch.randn(probe.shape, generator=gen, dtype=probe.dtype)

        def scalar(*xs):
            return (fn(*xs) * cot).sum()
    else:
        scalar = fn
    tape = torch.autograd.grad(scalar(*inputs), inputs, allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for x, g in zip(inputs, tape):
            g_tape = torch.zeros_like(x) if g is None else g
            g_fd = torch.empty_like(x)
            flat, fd_flat = x.view(-1), g_fd.view(-1)
            for j in range(flat.numel()):
                orig = flat[j].item()
                flat[j] = orig + eps
                up = scalar(*inputs).item()
                flat[j] = orig - eps
                down = scalar(*inputs).item()
                flat[j] = orig
                fd_flat[j] = (up - down) / (2 * eps)
            scale = max(g_tape.abs().max().item(), g_fd.abs().max().item())
            if scale < atol:
                continue
            worst = max(worst, (g_tape - g_fd).abs().max().item() / scale)
    return worst
