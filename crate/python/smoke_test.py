"""Smoke test for the qsched_py extension module."""

import math
import os
import tempfile

import qsched_py as qs


def main():
    gains = qs.sample_gains(4, users=4, antennas=16, seed=7)
    assert len(gains) == 4 and gains[0].users == 4
    g = gains[0]
    assert all(v >= 0.0 for row in g.rows() for v in row)

    best, best_rate = g.exhaustive(2)
    assert sum(best) == 2
    assert math.isclose(g.sum_rate(best), best_rate, rel_tol=1e-12)
    assert g.sum_rate(g.greedy(2)) <= best_rate + 1e-12
    assert g.random_mean(2) <= best_rate + 1e-12

    hand = qs.GainMatrix([[4.0, 0.0], [0.0, 1.0]], beta=10.0)
    assert math.isclose(hand.sum_rate([1, 1]), math.log2(41.0) + math.log2(11.0), rel_tol=1e-12)

    z = qs.run_circuit([0.3, -0.2, 1.1], 1, [0.1] * 9)
    assert len(z) == 3 and all(-1.0 <= v <= 1.0 for v in z)
    d_theta, d_input = qs.circuit_gradients([0.3, -0.2, 1.1], 1, [0.1] * 9)
    assert len(d_theta) == 9 and len(d_input) == 3 and len(d_input[0]) == 3

    for family in ("hybrid", "cnn"):
        p = qs.Policy(4, family=family, qubits=4, layers=1, seed=1)
        assert len(p.logits(g)) == 4
        assert sum(p.schedule(g, 2)) == 2
        hist = p.train(gains[:3], gains[3:], epochs=2, batch_size=2, seed=1)
        assert [h["epoch"] for h in hist] == [1.0, 2.0]
        print(family, p, "val_det", hist[-1]["val_det"])

    cfg = "users = 4\nantennas = 8\nqubits = 4\nlayers = 1\nepochs = 1\ntrain_samples = 8\nval_samples = 4\nrepeats = 1\n"
    with tempfile.TemporaryDirectory() as out:
        r = qs.run_command("train", cfg, out_dir=out)
        assert os.path.exists(os.path.join(out, "train_metrics.csv"))
        e = qs.run_command("eval", cfg, out_dir=out)
        assert e["policy_det"] <= e["oracle"] + 1e-9
        s = qs.run_command("sweep", cfg, ["sweep_policy=greedy"], out_dir=out, axis="snr", values=[10.0, 20.0])
        assert len(s) == 2
        print("train", r, "eval", e)

    try:
        qs.run_command("train", "nonsense_key = 1\n")
    except ValueError as err:
        print("config error:", err)
    else:
        raise AssertionError("expected ValueError")

    print("smoke test ok")


if __name__ == "__main__":
    main()
