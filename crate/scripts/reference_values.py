#!/usr/bin/env python3
"""Regenerates the frozen constants in crates/amgcl/tests/reference_values.rs:
the composite objective on a fixed 5-node instance, computed with torch
autograd as an independent reference."""

import torch

torch.set_default_dtype(torch.float64)

edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]
n = 5
deg = [0] * n
for i, j in edges:
    deg[i] += 1
    deg[j] += 1
A = torch.zeros((n, n))
for i, j in edges:
    w = 1.0 / (deg[i] * deg[j]) ** 0.5
    A[i, j] = w
    A[j, i] = w


def pattern(rows, cols, a, b):
    return torch.tensor(
        [[((r * 7 + c * 3 + a) % 11 - 5) / 8 + b for c in range(cols)] for r in range(rows)],
        requires_grad=True,
    )


X1 = torch.tensor([[1., 0., 1.], [0., 1., 0.], [1., 1., 0.], [0., 0., 1.], [1., 0., 0.]])
X2 = torch.tensor([[0., 1., 1.], [1., 0., 0.], [0., 1., 1.], [1., 1., 0.], [0., 0., 1.]])
XREF = torch.tensor([[1., 0., 1.], [0., 1., 0.], [1., 1., 0.], [0., 0., 1.], [1., 0., 1.]])

W1 = pattern(3, 2, 1, 0.45)
W2 = pattern(2, 2, 2, 0.4)
T1 = pattern(3, 2, 3, 0.5)
T2 = pattern(2, 2, 4, 0.35)
P1 = pattern(2, 2, 5, 0.55)
Pb1 = pattern(1, 2, 6, 0.3)
P2 = pattern(2, 2, 7, 0.45)
Pb2 = pattern(1, 2, 8, 0.25)
G1 = pattern(4, 4, 9, 0.35)
Gb1 = pattern(1, 4, 10, 0.2)
G2 = pattern(4, 3, 1, 0.3)
Gb2 = pattern(1, 3, 2, 0.15)


def encoder(X, Wa, Wb):
    return A @ torch.relu(A @ X @ Wa) @ Wb


h1 = encoder(X1, W1, W2)
h2 = encoder(X2, T1, T2).detach()  # stop-gradient on the target path
z1 = torch.relu(h1 @ P1 + Pb1) @ P2 + Pb2
emb = torch.cat([h1, h2], dim=1)
xhat = torch.relu(emb @ G1 + Gb1) @ G2 + Gb2

cos = torch.nn.functional.cosine_similarity(z1, h2, dim=1)
fcl = -2.0 * cos.mean()
rec = ((XREF - xhat) ** 2).sum(dim=1).mean()
loss = rec + 1.3 * fcl
loss.backward()

print("loss %.17g" % loss.item())
print("rec  %.17g" % rec.item())
print("fcl  %.17g" % fcl.item())
print("xhat[0,0] %.17g" % xhat[0, 0].item())
print("emb[2,1]  %.17g" % emb[2, 1].item())
print("z1[4,1]   %.17g" % z1[4, 1].item())
names = [
    ("enc.w1", W1), ("enc.w2", W2), ("pred.w1", P1), ("pred.b1", Pb1),
    ("pred.w2", P2), ("pred.b2", Pb2), ("gen.w1", G1), ("gen.b1", Gb1),
    ("gen.w2", G2), ("gen.b2", Gb2),
]
for name, t in names:
    g = t.grad
    print(
        '("%s", %d, %d, %.17g, %.17g),'
        % (name, g.shape[0] - 1, g.shape[1] - 1, g[0, 0].item(), g[-1, -1].item())
    )
assert T1.grad is None and T2.grad is None
