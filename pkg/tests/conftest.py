import os

# Cap the BLAS pools before numpy loads anywhere, so timings and numerics in
# the suite are the single-threaded ones.
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ[_var] = "1"

import pytest

from c2fpl.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def small_synth():
    """A 12-video bundle with planted truth, small enough for every test."""
    config = SynthConfig(
        n_videos=12, d=16, m_min=5, m_max=9, frames_per_segment=4, seed=11
    )
    return generate(config)
