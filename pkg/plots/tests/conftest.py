import math
import subprocess
import sys

import pytest

L = 2.0 * math.pi

# the conservation-benchmark run of the simulator's acceptance suite
CRITERION3_CFG = f"""
grid.dim = 1
grid.n = 256
grid.length = {L}
eos.a_l = 1.0
eos.a_g = 0.9
eos.rho_l0 = 1.0
eos.P_l0 = 0.0
eos.m_tilde = 1.2
eos.n_tilde = 0.8
visc.mu = 0.1
visc.lambda = 0.05
integrator.t_end = 1.0
ic.recipe = gaussian_bump
ic.amplitude_m = 0.05
ic.amplitude_n = 0.03
ic.amplitude_u = 0.02
ic.width = {L / 16}
"""

CONV_CFG = f"""
grid.dim = 1
grid.n = 32
grid.length = {L}
scheme.kind = central2
scheme.dealias = false
eos.a_l = 1.0
eos.a_g = 0.9
eos.rho_l0 = 1.0
eos.P_l0 = 0.0
eos.m_tilde = 1.2
eos.n_tilde = 0.8
visc.mu = 0.1
visc.lambda = 0.05
integrator.t_end = 0.1
ic.recipe = equilibrium
"""


def _run_simulator(args):
    proc = subprocess.run([sys.executable, "-m", "twophase", *args],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def diagnostics_csv(tmp_path_factory):
    """diagnostics.csv produced by the simulator CLI (external interface)."""
    base = tmp_path_factory.mktemp("simdata")
    cfg = base / "run.cfg"
    cfg.write_text(CRITERION3_CFG, encoding="utf-8")
    out = base / "out"
    _run_simulator(["--quiet", "run", "--config", str(cfg), "--out-dir", str(out)])
    return out / "diagnostics.csv"


@pytest.fixture(scope="session")
def convergence_csv(tmp_path_factory):
    base = tmp_path_factory.mktemp("convdata")
    cfg = base / "conv.cfg"
    cfg.write_text(CONV_CFG, encoding="utf-8")
    out = base / "report"
    _run_simulator(["--quiet", "convergence", "--config", str(cfg),
                    "--out-dir", str(out), "--resolutions", "24,48,96"])
    return out / "convergence.csv"
