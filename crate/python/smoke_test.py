"""Smoke test for the `cpo` extension module.

Build and install first:  pip install --no-build-isolation -e crates/py
Then run:                 python3 python/smoke_test.py
"""

import math

import cpo


def main():
    p = cpo.SystemParams(gamma=0.11, epsilon=0.85, Gamma=1.1, S=1.0, n1_eq=0.3, n0_eq=0.7)
    assert abs(p.saturation() - 1.0) < 1e-12

    shape = cpo.resonance_shape(p)
    assert 0 < shape.w0 < shape.w1

    deltas = [-2.0 + 4.0 * i / 200 for i in range(201)]
    signal = cpo.scan(p, deltas, tier="analytic")
    for d, s in zip(deltas[::40], signal[::40]):
        assert math.isclose(s, cpo.fluorescence_signal(p, d), rel_tol=1e-12)

    fit = cpo.fit(deltas, signal, model="theory")
    assert fit.converged, fit.status
    got = fit.resonance()
    assert abs(got.w0 - shape.w0) / shape.w0 < 1e-6
    assert abs(got.w1 - shape.w1) / shape.w1 < 1e-6

    # With fast coherence decay the harmonic tier meets the closed form at weak drive.
    fast = cpo.SystemParams(gamma=0.11, epsilon=0.85, Gamma=110.0, S=0.05, n1_eq=0.3, n0_eq=0.7)
    weak = fast.with_beat(0.2)
    hb = cpo.steady_difference(weak, tier="harmonic")
    closed = cpo.fluorescence_signal(weak, 0.2)
    assert abs(hb - closed) < 1e-3 * abs(closed), (hb, closed)

    rows = cpo.sweep(p, [0.1, 1.0, 10.0])
    assert all(r is not None for r in rows)

    frame = cpo.eigen_frame(p)
    assert frame.lambda0 < frame.lambda1

    try:
        cpo.SystemParams(gamma=1.0, Omega=1.0, S=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("mixed drive specification accepted")

    print("smoke test passed:", shape)


if __name__ == "__main__":
    main()
