"""Smoke test for the `hdmi` extension module.

Build and run from the repository root:

    cargo build --release -p hdmi-python --features extension-module
    cp target/release/libhdmi.so python/hdmi.so
    python3 python/smoke_test.py
"""

import math
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import hdmi  # noqa: E402


def check(name, ok, detail=""):
    print(f"{name}\t{'pass' if ok else 'fail'}\t{detail}")
    return ok


def main():
    ok = True

    xor = [[[0.25 if (x ^ y) == z else 0.0 for z in range(2)] for y in range(2)] for x in range(2)]
    ii = hdmi.interaction_information(xor)
    ok &= check("xor_interaction", abs(ii + math.log(2)) < 1e-12, f"{ii:.15f}")
    ok &= check("mutual_info_independent", abs(hdmi.mutual_info([[0.25, 0.25], [0.25, 0.25]])) < 1e-15)
    residual = hdmi.mi_sweep(100, 4, 0)
    ok &= check("mi_sweep", residual < 1e-12, f"{residual:.3e}")

    grads = dict(hdmi.gradcheck(0, 8))
    ok &= check("gradcheck", max(grads.values()) < 1e-4, f"{max(grads.values()):.2e}")

    ok &= check("zero_init_single", abs(hdmi.zero_init_loss() - 6 * math.log(2)) < 1e-12)
    ok &= check("zero_init_two_layer", abs(hdmi.zero_init_loss(2) - 18 * math.log(2)) < 1e-12)

    net = hdmi.synthetic(nodes=60, attribute_dim=8, p_in=0.3, seed=1)
    ok &= check("synthetic", (net.n_nodes, net.n_layers) == (60, 2), repr(net))

    cfg = hdmi.Config(embedding_dim=16, max_epochs=60, seed=3, lambda_r=[1.0, 1.0])
    run = hdmi.train_hdmi(net, cfg)
    ok &= check("epoch0_loss", abs(run.loss_trace[0] - 18 * math.log(2)) < 1e-10, f"{run.loss_trace[0]:.12f}")
    ok &= check("embedding_shape", (len(run.embedding), len(run.embedding[0])) == (60, 16))
    row_sums = [sum(r) for r in run.attention]
    ok &= check("attention_rows_sum_to_one", all(abs(s - 1) < 1e-12 for s in row_sums))

    again = hdmi.train_hdmi(net, cfg)
    ok &= check("deterministic", again.embedding == run.embedding and again.trace_tsv() == run.trace_tsv())

    train, _, test = net.splits
    scores = hdmi.evaluate(run.embedding, net.labels, train, test)
    ok &= check("evaluate", scores["micro_f1"] > 0.8, f"micro_f1={scores['micro_f1']:.3f} nmi={scores['nmi']:.3f}")

    single = hdmi.train_hdi(net, 0, hdmi.Config(embedding_dim=8, max_epochs=5))
    ok &= check("single_layer", single.attention is None and len(single.per_layer) == 1)

    with tempfile.TemporaryDirectory() as d:
        manifest = net.save(d)
        loaded = hdmi.Network.load(manifest)
        ok &= check("save_load", loaded.edges(1) == net.edges(1) and loaded.labels == net.labels)
        try:
            hdmi.Network.load(Path(d) / "missing.txt")
            ok &= check("missing_file_raises", False)
        except OSError as e:
            ok &= check("missing_file_raises", "missing.txt" in str(e), str(e))

    try:
        hdmi.Config(learning_rate=-1)
        ok &= check("bad_config_raises", False)
    except ValueError:
        ok &= check("bad_config_raises", True)

    print(f"status\t{'pass' if ok else 'fail'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
