"""
Jones calculus for the polarization of a single photon.

Operators are written in the {|H>, |V>} basis. Both parties use
coordinates in which the backward action of any reciprocal medium is
Z Omega_f^T Z, so no coordinate change is ever applied.

The noisy channel is a quarter-wave plate, a half-wave plate and a
second quarter-wave plate. Forward-propagating light sees
Q(phi2) H(theta) Q(phi1), backward-propagating light sees
Q(-phi1) H(-theta) Q(-phi2).
"""

import enum
import math
import re
from dataclasses import dataclass

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)

_S2 = 1 / math.sqrt(2)

# eigenstates of Z, X and Y
POLARIZATION_KETS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "A": np.array([_S2, -_S2], dtype=complex),
    "R": np.array([_S2, 1j * _S2], dtype=complex),
    "L": np.array([_S2, -1j * _S2], dtype=complex),
}

UNITARY_TOL = 1e-12
PHASE_TOL = 1e-10


class JonesOperator:
    """2x2 operator acting on one photon's polarization.

    Attributes
    ----------
    mat : np.ndarray
        Complex 2x2 array in the {H, V} basis.
    """

    def __init__(self, mat):
        mat = np.array(mat, dtype=complex)
        if mat.shape != (2, 2):
            raise ValueError("Jones operator must be 2x2, got "
                             + str(mat.shape))
        self.mat = mat

    def __matmul__(self, other):
        return JonesOperator(self.mat @ other.mat)

    def __repr__(self):
        return "JonesOperator(" + np.array2string(self.mat,
                                                  precision=4) + ")"

    def element(self, out_pol, in_pol):
        """
        Return <out_pol|Omega|in_pol> for polarizations "H" or "V".
        """
        i = "HV".index(out_pol)
        j = "HV".index(in_pol)
        return self.mat[i, j]

    def scaled(self, amplitude):
        return JonesOperator(amplitude * self.mat)

    def is_unitary(self, tol=UNITARY_TOL):
        residual = self.mat.conj().T @ self.mat - I2
        return np.max(np.abs(residual)) < tol

    def is_passive(self, tol=UNITARY_TOL):
        """
        True when 0 <= Omega^dagger Omega <= 1,
        i.e. every singular value is at most one.
        """
        singular_values = np.linalg.svd(self.mat, compute_uv=False)
        return singular_values[0] <= 1 + tol


class PauliLabel(enum.Enum):
    I = "I"
    X = "X"
    Y = "Y"
    Z = "Z"


_PAULI = {
    PauliLabel.I: I2,
    PauliLabel.X: X,
    PauliLabel.Y: Y,
    PauliLabel.Z: Z,
}


def _canonical_angle(angle):
    # map to (-pi, pi]
    return math.pi - (math.pi - angle) % (2 * math.pi)


@dataclass(frozen=True)
class WaveplateSetting:
    """Angles of the QWP-HWP-QWP stack in radians."""

    phi1: float
    theta: float
    phi2: float

    def __post_init__(self):
        for name in ("phi1", "theta", "phi2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError("waveplate angle " + name
                                 + " is not finite: " + str(value))
            object.__setattr__(self, name, _canonical_angle(value))

    def as_degrees(self):
        return tuple(math.degrees(a) for a in (self.phi1, self.theta,
                                               self.phi2))


_PAULI_SETTINGS = {
    PauliLabel.I: (0.0, 0.0, 0.0),
    PauliLabel.X: (0.0, -math.pi / 4, 0.0),
    PauliLabel.Y: (math.pi / 2, -math.pi / 4, 0.0),
    PauliLabel.Z: (math.pi / 4, 0.0, math.pi / 4),
}


def pauli_matrix(label):
    return _PAULI[PauliLabel(label)].copy()


def hwp(theta):
    """
    Half-wave plate at angle theta: cos(2 theta) Z - sin(2 theta) X.
    """
    return JonesOperator(math.cos(2 * theta) * Z - math.sin(2 * theta) * X)


def qwp(phi):
    """
    Quarter-wave plate at angle phi:
    (i I - cos(2 phi) Z + sin(2 phi) X) / sqrt(2).
    """
    return JonesOperator((1j * I2 - math.cos(2 * phi) * Z
                          + math.sin(2 * phi) * X) * _S2)


def forward_op(s):
    """
    Action of the waveplate stack on forward-propagating light.

    Parameters
    ----------
    s : WaveplateSetting

    Return
    ------
    op : JonesOperator
        Q(phi2) H(theta) Q(phi1).
    """
    return qwp(s.phi2) @ hwp(s.theta) @ qwp(s.phi1)


def backward_op(s):
    """
    Action of the same stack on light travelling the other way,
    Q(-phi1) H(-theta) Q(-phi2).
    """
    return qwp(-s.phi1) @ hwp(-s.theta) @ qwp(-s.phi2)


def reciprocal_conjugate(omega):
    """
    Backward operator of a reciprocal medium with forward operator omega.

    <i|Omega_b|j> = <j|Z Omega_f Z|i>, i.e. Omega_b = Z Omega_f^T Z.
    Diagonal elements are preserved, off-diagonal ones are swapped
    and change sign.
    """
    return JonesOperator(Z @ omega.mat.T @ Z)


def pauli_setting(p):
    """
    Angle triple realizing the Pauli operator p up to a global phase.
    """
    return WaveplateSetting(*_PAULI_SETTINGS[PauliLabel(p)])


def equal_up_to_phase(a, b, tol=PHASE_TOL):
    """
    True when ||A - e^{i lambda} B||_max < tol
    for lambda = arg Tr(B^dagger A).
    """
    a = a.mat if isinstance(a, JonesOperator) else np.asarray(a)
    b = b.mat if isinstance(b, JonesOperator) else np.asarray(b)
    overlap = np.trace(b.conj().T @ a)
    phase = np.exp(1j * np.angle(overlap)) if abs(overlap) > 0 else 1.0
    return np.max(np.abs(a - phase * b)) < tol


def random_setting(rng):
    """
    Draw three angles uniformly from (-pi, pi].

    Parameters
    ----------
    rng : np.random.Generator
    """
    phi1, theta, phi2 = rng.uniform(-math.pi, math.pi, size=3)
    return WaveplateSetting(phi1, theta, phi2)


def rotator(beta):
    """
    Real rotation of the polarization plane by beta.
    """
    c, s = math.cos(beta), math.sin(beta)
    return JonesOperator([[c, -s], [s, c]])


def faraday_rotator(beta):
    """
    Non-reciprocal rotation.

    The plane rotates the same way in the lab frame for both propagation
    directions, which in the reciprocal coordinates means the backward
    operator is the rotation by -beta instead of Z R(beta)^T Z = R(beta).

    Return
    ------
    forward : JonesOperator
    backward : JonesOperator
    """
    return rotator(beta), rotator(-beta)


_SETTING_RE = re.compile(r"^\s*([^,]+),([^,]+),([^,]+?)\s+(deg|rad)\s*$")


def parse_setting(text):
    """
    Parse "phi1, theta, phi2 unit" where unit is deg or rad.

    Parameters
    ----------
    text : str
        e.g. "45, 0, 45 deg" or "1.5708, -0.7854, 0 rad".

    Return
    ------
    setting : WaveplateSetting
    """
    m = _SETTING_RE.match(text)
    if not m:
        raise ValueError("waveplate setting must look like "
                         "'phi1, theta, phi2 deg|rad', got '" + text + "'")

    values = [float(m.group(i)) for i in (1, 2, 3)]
    if m.group(4) == "deg":
        values = [math.radians(v) for v in values]

    return WaveplateSetting(*values)
