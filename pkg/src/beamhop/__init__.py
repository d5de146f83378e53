"""Multi-satellite beam-hopping simulator with a hybrid-action PPO scheduler."""
import os as _os

# BEAMHOP_THREADS also caps BLAS threads; must happen before numpy loads
if "BEAMHOP_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["BEAMHOP_THREADS"])

__version__ = "0.1.0"
