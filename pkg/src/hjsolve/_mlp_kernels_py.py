"""Pure-numpy MLP kernels (reference and fallback for the compiled module).

Layout conventions shared with ``_mlp_kernels.pyx``:

* inputs ``X`` are C-contiguous ``(n, d_in)`` float64 arrays;
* weights ``W_i`` have shape ``(fan_out, fan_in)``, biases ``(fan_out,)``;
* the last layer has ``fan_out == 1`` and no activation.
"""
import numpy as np


def mlp_forward(X, weights, biases):
    """Evaluate the network on a batch and keep hidden activations.

    Returns ``(out, acts)`` where ``acts[0]`` is ``X`` and ``acts[i]`` is the
    post-ReLU output of hidden layer ``i``.
    """
    acts = [X]
    h = X
    for W, b in zip(weights[:-1], biases[:-1]):
        z = h @ W.T
        z += b
        np.maximum(z, 0.0, out=z)
        acts.append(z)
        h = z
    out = h @ weights[-1][0]
    out += biases[-1][0]
    return out, acts


def mlp_backward(weights, acts, upstream, grad_w, grad_b):
    """Accumulate ``sum_j upstream[j] * d out_j / d theta`` into the gradient views.

    ``grad_w``/``grad_b`` are writable views (same shapes as the parameters);
    results are added in place. ReLU derivative at 0 is taken as 0.
    """
    g = upstream.reshape(-1, 1)
    n_layers = len(weights)
    for i in range(n_layers - 1, -1, -1):
        a = acts[i]
        grad_w[i] += g.T @ a
        grad_b[i] += g.sum(axis=0)
        if i > 0:
            g = (g @ weights[i]) * (a > 0.0)
