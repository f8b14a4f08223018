"""The reverse-mode autodiff core and its finite-difference verifier.

Builds a small computation by hand, backpropagates through it, and then runs
the gradient checker over a two-layer fragment, including a demonstration of
what a corrupted backward rule looks like in the report.
"""

import numpy as np

from chainfraud import autodiff as ad
from chainfraud.autodiff import Parameter, Tensor
from chainfraud.gradcheck import grad_check

# --- a scalar chain, by hand -------------------------------------------------
w = Tensor(np.array([[1.0, -2.0], [0.5, 3.0]]), requires_grad=True)
x = Tensor(np.array([[2.0], [1.0]]))
loss = ad.sum_(ad.relu(ad.matmul(w, x)))
loss.backward()
print("loss =", loss.item())
print("d(loss)/dW =\n", w.grad)  # rows gated by relu, columns = x

# gradients accumulate across backward calls until zeroed
loss.backward()
print("after second backward (doubled):\n", w.grad)

# --- optimizer step ----------------------------------------------------------
from chainfraud.optim import AdamW

p = Parameter(np.array([1.0]), "theta")
opt = AdamW([p], lr=0.1, weight_decay=0.0)
p.grad = np.array([1.0])
opt.step()
print(f"\nAdamW first step from theta=1, g=1, lr=0.1  ->  {p.data[0]:.10f}")

# --- the checker -------------------------------------------------------------
rng = np.random.default_rng(0)
w1 = Parameter(rng.normal(size=(6, 8)), "w1")
w2 = Parameter(rng.normal(size=(8, 2)), "w2")
inputs = Tensor(rng.normal(size=(4, 6)))
labels = np.array([0, 1, 1, 0])


def fragment():
    hidden = ad.gelu(ad.matmul(inputs, w1))
    probs = ad.softmax(ad.matmul(hidden, w2), axis=-1)
    return ad.cross_entropy(probs, labels)


print("\n" + grad_check(fragment, [w1, w2], tol=1e-4).summary())

# corrupt a vjp on purpose: the checker flags the affected parameter
true_relu_grad = None


def broken():
    hidden = ad.matmul(inputs, w1)
    mask = hidden.data > 0
    wrong = ad._result(np.where(mask, hidden.data, 0.0), "relu",
                       [(hidden, lambda g: g * mask * 1.05)])  # 5% too big
    return ad.mean(wrong)


print("\nwith a deliberately corrupted relu backward:")
print(grad_check(broken, [w1], tol=1e-4).summary())
