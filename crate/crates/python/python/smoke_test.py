"""Smoke test for the pnpkit_py extension module.

Build and run:

    cargo build -p pnpkit-py --release --features extension-module
    cp target/release/libpnpkit_py.so /tmp/pnpkit_py.so
    PYTHONPATH=/tmp python3 crates/python/python/smoke_test.py
"""

import math

import pnpkit_py as pk


def main():
    g = pk.GmmPrior.gaussian(1, 0.0, 1.0)
    assert abs(g.mmse_denoise([1.0], 1.0)[0] - 0.5) < 1e-12
    assert abs(g.h_sigma([0.0], 1.0) - 0.5 * math.log(4 * math.pi)) < 1e-12
    assert abs(g.inverse([0.8], 1.0)[0] - 1.6) < 1e-10
    assert abs(g.hmmse_grad([0.3], 1.0, 1.0)[0] - 0.3) < 1e-10

    w = pk.GmmPrior.symmetric_bimodal([1.0], 1e-6)
    assert abs(w.jacobian_norm([0.0], 0.5) - 4.0) < 0.2
    assert w.tweedie_gap([0.3], 0.5) < 1e-10

    mix = pk.GmmPrior([0.5, 0.5], [[0.0, 0.0], [1.0, 1.0]], [0.2, [0.1, 0.3]])
    assert mix.dim == 2 and mix.num_components == 2

    assert abs(pk.admissible_step(1.0) - 0.45) < 1e-15
    assert pk.descent_margin_eta(0.5, 1.0) == 0.0
    assert abs(pk.psnr([0.6] * 4, [0.5] * 4) - 20.0) < 1e-9

    try:
        pk.GmmPrior([1.0], [[0.0]], [-1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("negative variance accepted")

    r = pk.deblur("shapes", "gaussian", 0.03, solver="fista", gamma="sigma2", max_iter=60)
    assert r["final_psnr"] > r["input_psnr"] + 1.0, r
    assert len(r["restored"]) == r["shape"][0] * r["shape"][1]

    ref = pk.reference_run()
    assert ref["eta"] > 0 and ref["passed"], ref

    print("pnpkit_py smoke test OK: deblur %.2f -> %.2f dB, reference ||grad f|| = %.2e"
          % (r["input_psnr"], r["final_psnr"], ref["grad_f_norm"]))


if __name__ == "__main__":
    main()
