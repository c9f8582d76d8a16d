"""Smoke test for the Python bindings.

Build first:  pip install --no-build-isolation ./crates/py
"""
import math
import tempfile

import absorption_lab_py as lab


def close(a, b, tol):
    return abs(a - b) <= tol * max(abs(b), 1e-300)


def main():
    sq = lab.Nonlinearity("u^2")
    assert sq.f(3.0) == 9.0 and sq.h(3.0) == 3.0
    assert close(sq.big_f(2.0), 8.0 / 3.0, 1e-12)

    # u' = -u^2: φ_a(t) = a/(1 + a t), φ_∞(t) = 1/t
    assert close(lab.flow(sq, 2.0, 0.5), 1.0, 1e-8)
    sf = lab.ScalarFlow(sq)
    assert close(sf.phi_infinity(0.25), 4.0, 1e-6)

    rep = lab.classify(lab.Nonlinearity.log(3.0), 3)
    assert isinstance(rep, dict) and rep
    print("classify log(3):", sorted(rep))

    try:
        lab.ScalarFlow(lab.Nonlinearity("u"))
    except ValueError as e:
        print("linear f has no flow:", e)
    else:
        raise AssertionError("expected ValueError")

    p = lab.global_profile(lab.Nonlinearity.log(1.5), 1.0, 3, 2.0)
    assert p["r"][0] == 0.0 and close(p["w"][0], 1.0, 1e-12)
    assert all(b >= a for a, b in zip(p["w"], p["w"][1:]))

    with tempfile.TemporaryDirectory() as out:
        cfg = 'experiment = "flow"\nnonlinearity = "u^2"\nN = 3\n'
        m = lab.run_experiment(cfg, out, ["samples=5"])
        assert all(c["holds"] for c in m["postconditions"])
        print("flow artifacts:", [f["file"] for f in m["files"]])

    print("smoke test ok")


if __name__ == "__main__":
    main()
