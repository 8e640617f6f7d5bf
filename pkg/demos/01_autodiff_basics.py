"""Tour of the tensor core: graphs, gradients, and the optimizer.

Builds a tiny computation, checks its gradient against central finite
differences, then lets Adam walk a quadratic bowl.
"""

import numpy as np

from emgformer import Adam, Tensor, use_dtype
from emgformer.tensor import cross_entropy, gelu, layer_norm, matmul, softmax_lastdim

print("== a small differentiable computation ==")
rng = np.random.default_rng(0)
with use_dtype(np.float64):
    w = Tensor(rng.standard_normal((3, 4)), requires_grad=True, name="w")
    x = Tensor(rng.standard_normal((5, 3)))
    logits = matmul(x, w)
    loss = cross_entropy(logits, [0, 1, 2, 3, 0])
    loss.backward()
    print(f"loss = {loss.item():.6f}")
    print(f"dloss/dw has shape {w.grad.shape}, mean magnitude {abs(w.grad).mean():.4f}")

    # finite-difference spot check on one weight
    i, j = 1, 2
    h = 1e-6
    w.data[i, j] += h
    up = cross_entropy(matmul(x, w), [0, 1, 2, 3, 0]).item()
    w.data[i, j] -= 2 * h
    down = cross_entropy(matmul(x, w), [0, 1, 2, 3, 0]).item()
    w.data[i, j] += h
    fd = (up - down) / (2 * h)
    print(f"w[{i},{j}]: analytic {w.grad[i, j]:+.8f}  finite-diff {fd:+.8f}")

print()
print("== the building blocks behave as advertised ==")
row = Tensor(np.array([1.0, 2.0, 3.0]))
print("softmax([1,2,3])      =", np.round(softmax_lastdim(row).data, 5))
print("gelu([-2,-1,0,1,2])   =", np.round(gelu(Tensor(np.array([-2.0, -1, 0, 1, 2]))).data, 4))
two = Tensor(np.array([1.0, 3.0]))
print("layer_norm([1,3])     =", np.round(layer_norm(two, Tensor(np.ones(2)), Tensor(np.zeros(2))).data, 4))

print()
print("== Adam on f(t) = t^2 from t = 1 ==")
theta = Tensor(np.array([1.0]), requires_grad=True)
opt = Adam({"theta": theta}, lr=0.1, weight_decay=0.0)
for step in range(1, 101):
    theta.grad = 2.0 * theta.data
    opt.step()
    if step in (1, 10, 50, 100):
        print(f"step {step:3d}: theta = {theta.data[0]:+.5f}")
print("converged near the minimum, as a 100-step scalar simulation predicts")
