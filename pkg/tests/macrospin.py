"""Single-site LLG with the field along z, which has a closed-form solution.

With ``dm/dt = c1 m x H + c2 m x (m x H)`` and ``H = (0, 0, h)`` the polar
motion decouples: ``m_z = tanh(-c2 h t + atanh(m_z0))`` and the in-plane
angle advances at the constant rate ``-c1 h``.
"""

import numpy as np

from fieldsim.integrate import IntegratorConfig, integrate
from fieldsim.llg import MaterialParams, Micromagnet
from fieldsim.mesh import Mesh
from fieldsim.quantities import SI

ALPHA = 0.1
H = 1e5
GAMMA = 2.211e5
GAMMA_P = GAMMA / (1 + ALPHA ** 2)


def make_magnet(alpha=ALPHA):
    params = MaterialParams(Ms=SI(8e5, "A/m"), alpha=alpha, gamma=SI(GAMMA, "m/(A*s)"))
    mag = Micromagnet(Mesh(1, dx=5e-9), params, (0.0, 0.0, H))
    mag.set_m([1.0, 0.0, 0.0])
    return mag


def closed_form(t, alpha=ALPHA):
    gp = GAMMA / (1 + alpha ** 2)
    mz = np.tanh(alpha * gp * H * t)
    phase = gp * H * t
    return mz, phase


def run(t_end=2e-9, alpha=ALPHA, **cfg_kwargs):
    """Integrate and return arrays (t, m) sampled at every accepted step."""
    mag = make_magnet(alpha)
    cfg = IntegratorConfig(t_end=t_end, **cfg_kwargs)
    ts, ms = [], []

    def observe(t, y, dydt, steps):
        ts.append(t)
        ms.append(y.copy())

    y = mag.m.data.reshape(-1).copy()
    summary = integrate(mag.rhs, y, cfg, [observe], components=3)
    return np.array(ts), np.array(ms), summary
