"""Finite-difference smoothness of the enhancement graph in its masks.

Run: python3 demos/07_gradient_check.py
"""
import numpy as np

from farfield.gradcheck import GraphProbe, PipelineGraph, smoothness_sweep, sweep_failures

# Probes at random interior mask values: central differences should shrink
# their error like h^2 on a smooth graph.
probe = GraphProbe(pipeline="full", loss="logmel_mse")
reports = smoothness_sweep(probe, 5)
for i, r in enumerate(reports):
    print(f"probe {i}: order {r.order:.2f}  verdict {r.verdict}  "
          f"derivative ~ {r.extrapolated:+.4e}")

# A clipped ReLU pinned at its upper corner is not differentiable there.
# The report flags the branch instead of counting it as a failure.
probe = GraphProbe(activation="clipped_relu_1")
graph = PipelineGraph(probe)
pinned = {k: np.ones(graph.shape) for k in graph.mask_names}
reports = smoothness_sweep(probe, 2, graph=graph, point=pinned)
print("\npinned clipped ReLU:", [(r.verdict, r.flags) for r in reports])
print("unexplained failures:", sweep_failures(reports))
