"""Tour of the SIMD backend: slot arithmetic, rotation, depth, counters.

Run with: python3 demos/01_simd_backend_tour.py
"""

import numpy as np

from hekan import BackendConfig, make_backend

cfg = BackendConfig(slot_count=8, depth_budget=6)
be = make_backend(cfg)

print("== slot-wise arithmetic ==")
a = be.encrypt([1.0, 2.0, 3.0])
b = be.encrypt([10.0, 20.0, 30.0])
print("a + b       ->", be.decrypt(be.add(a, b))[:3])
print("a - b       ->", be.decrypt(be.sub(a, b))[:3])
print("a * b       ->", be.decrypt(be.mul(a, b))[:3])
print("a * [2,2,2] ->", be.decrypt(be.mul(a, 2.0))[:3])

print("\n== rotation is cyclic over all", cfg.slot_count, "slots ==")
v = be.encrypt(np.arange(8.0))
print("rot +3:", be.decrypt(be.rotate(v, 3)))
print("rot -2:", be.decrypt(be.rotate(v, -2)))

print("\n== every multiplication costs one level ==")
x = be.encrypt([1.5])
print("fresh level:", x.level)
x = be.mul(x, x)
print("after ct*ct:", x.level)
x = be.mul(x, 0.1)
print("after ct*pt:", x.level)
print("additions are free:", be.add(x, x).level)

print("\n== the counter sees everything ==")
print(be.counter)

print("\n== optional Gaussian noise per operation ==")
noisy = make_backend(BackendConfig(slot_count=8, depth_budget=6,
                                   noise_std=1e-8, rng_seed=42))
ct = noisy.encrypt([1.0, 2.0, 3.0])
err = noisy.decrypt(ct)[:3] - np.array([1.0, 2.0, 3.0])
print("round-trip error:", err)
