"""Networked inverted-pendulum case study: nominal model, controller, limits."""
import numpy as np

from .ncs import LinearPlant, NominalModel, PendulumPlant

A_N = np.array(
    [
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 29.4311, 0.0, 0.0],
    ]
)
B_N = np.array([[0.0], [0.0], [1.0], [3.0001]])
K_N = np.array([[3.7569, -29.6225, 4.0648, -5.4563]])

# outputs: cart position alpha [m], pendulum angle theta [rad]
C_OUT = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
LIMITS = np.array([0.3, 0.8])

# theta_ddot = c u cos(theta) + c g sin(theta); linearisation gives B_n[3] = c, A_n[3,1] = c g
PEND_C = 3.0001
PEND_G = 29.4311 / 3.0001

# Lyapunov solution for (Phi_n, Q = I), as published (upper triangle, 4 decimals)
P_PUBLISHED = np.array(
    [
        [1.7760, -2.0855, 0.8362, -0.3231],
        [-2.0855, 10.6948, -2.9413, 1.4742],
        [0.8362, -2.9413, 1.0652, -0.4646],
        [-0.3231, 1.4742, -0.4646, 0.2755],
    ]
)

# published eigen-decomposition A_n = X_n J_n X_n^-1
X_N = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.5, 0.5],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, -2.7125, 2.7125],
    ]
)
J_N = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, -5.425, 0.0],
        [0.0, 0.0, 0.0, 5.425],
    ]
)
PSI_N0_PUBLISHED = np.array([0.1, 0.1, 0.0816, 0.1184]) * 1e-3

AUX0 = 1e-4 * np.ones(4)
F_A0 = np.eye(4)


def nominal_model():
    return NominalModel(A_N, B_N, K_N)


def nonlinear_plant():
    return PendulumPlant(c=PEND_C, g=PEND_G, C=C_OUT)


def linear_nominal_plant():
    return LinearPlant(A_N, B_N, C_OUT)


def perturbed_linear_plant(rel=0.05):
    """Linear plant whose gravity term differs from the nominal one by ``rel``."""
    A = A_N.copy()
    A[3, 1] *= 1.0 + rel
    return LinearPlant(A, B_N, C_OUT)
