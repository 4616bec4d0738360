"""Serving the source model over TCP and adapting against it.

The adapting side never imports the source weights: it only sees the
address. Results match an in-process run bit for bit.
"""
import numpy as np

from beta_dabp import BetaConfig, InProcessBlackBox, connect, run_beta, serve, train_source_model, two_moons_task

source, target = two_moons_task()
model = train_source_model(source)
server = serve(model, "127.0.0.1:0")
print(f"black box listening on {server.endpoint}")

cfg = BetaConfig(epochs=8)
try:
    remote = connect(server.endpoint)
    wire = run_beta(cfg, remote, target)
    print(f"over the wire: acc {wire.report.summary['acc_a']:.3f} after {remote.query_count} queries")
    remote.close()
finally:
    server.stop()

local = run_beta(cfg, InProcessBlackBox(model), target)
same = np.array_equal(wire.net_a.flat(), local.net_a.flat())
print(f"in-process:    acc {local.report.summary['acc_a']:.3f}; identical weights: {same}")
