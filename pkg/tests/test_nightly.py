"""Large-lattice run, excluded from the default suite.

Run with: pytest -m nightly tests/test_nightly.py -s
One realization at 400x400 takes several minutes; the targets are
distributional bands around published single-realization values, not
exact numbers.
"""

import time

import numpy as np
import pytest

import deformfield as df


@pytest.mark.nightly
def test_full_scale_pipeline(tmp_path):
    cfg = df.PipelineConfig(
        grid_nx=400,
        grid_ny=400,
        spacing_x=1.0 / 399.0,
        spacing_y=1.0 / 399.0,
        family="polynomial-plus-fractional",
        variance=0.5151,
        alpha=0.7,
        c=1.0,
        deform="rotational",
        deform_r0=1.2,
        deform_angle=float(np.pi / 2),
        seed=1,
        alpha_max=4.0,
        block=10,
        sim_block=50,
        smooth_window=4,
        flow_steps=20,
        flow_lattice=64,
        harmonic_n=8,
        d1_samples=20000,
        threads=4,
    )
    t0 = time.monotonic()
    metrics = df.run_pipeline(cfg, str(tmp_path / "full"))
    elapsed = time.monotonic() - t0
    print(
        f"full scale: alpha {metrics['alpha']:.4f}, d1 {metrics['d1']:.4f}, "
        f"d2 {metrics['d2']:.4f}, {elapsed:.0f}s"
    )
    assert 0.676 < metrics["alpha"] < 0.716
    assert 0.0282 < metrics["d1"] < 0.1126
    assert 0.0338 < metrics["d2"] < 0.1350
