"""Seedable linear shear-frame simulator with ground-truth damage labels.

A multi-story building is idealized as lumped story masses connected by
inter-story stiffnesses (diagonal mass matrix, tridiagonal stiffness
matrix) with modal damping. Independent white-noise forces drive every
story; the damped system is integrated with the exact zero-order-hold
discretization of the continuous state-space model, so the step update is
unconditionally stable and checkable against modal closed forms. Damage is
a stiffness retention factor applied to one story's stiffness, switched in
at the first sample of a known chunk index, which makes every downstream
statistical claim verifiable against ground truth.

Conventions: story s connects floor s to floor s-1 (the ground for s = 1);
sensors measure absolute floor accelerations; the reported signal is the
response plus measurement noise at a configurable SNR.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.signal import cont2discrete, lfilter

from .errors import ConfigError, EigenFailure


@dataclass
class ShearFrameModel:
    """Lumped-mass shear building: per-story masses, stiffnesses, modal damping."""

    masses: np.ndarray
    stiffnesses: np.ndarray
    zeta: np.ndarray = 0.02

    def __post_init__(self) -> None:
        self.masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        self.stiffnesses = np.atleast_1d(np.asarray(self.stiffnesses, dtype=float))
        s = self.masses.size
        if s < 1 or self.stiffnesses.size != s:
            raise ValueError("need one mass and one stiffness per story")
        if np.any(self.masses <= 0) or np.any(self.stiffnesses <= 0):
            raise ValueError("masses and stiffnesses must be positive")
        zeta = np.asarray(self.zeta, dtype=float)
        if zeta.ndim == 0:
            zeta = np.full(s, float(zeta))
        if zeta.size != s or np.any(zeta < 0) or np.any(zeta >= 1):
            raise ValueError("need one damping ratio in [0, 1) per mode")
        self.zeta = zeta

    @classmethod
    def uniform(cls, stories: int, mass: float, stiffness: float, zeta: float = 0.02):
        return cls(
            masses=np.full(stories, float(mass)),
            stiffnesses=np.full(stories, float(stiffness)),
            zeta=zeta,
        )

    @property
    def stories(self) -> int:
        return self.masses.size

    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.masses)

    def stiffness_matrix(self, stiffnesses: np.ndarray | None = None) -> np.ndarray:
        """Tridiagonal assembly: K[i,i] = k_i + k_{i+1}, K[i,i+1] = -k_{i+1}."""
        k = self.stiffnesses if stiffnesses is None else np.asarray(stiffnesses, dtype=float)
        s = self.stories
        mat = np.zeros((s, s))
        for i in range(s):
            mat[i, i] = k[i] + (k[i + 1] if i + 1 < s else 0.0)
            if i + 1 < s:
                mat[i, i + 1] = mat[i + 1, i] = -k[i + 1]
        return mat


@dataclass
class DamageScenario:
    """A single stiffness change: which story, how much is retained, and when.

    ``retention`` is 1 exactly when the scenario is undamaged; a damaged
    scenario needs a story, retention in (0, 1) and the 1-based chunk index
    at which the stiffness switch happens.
    """

    story: int | None = None
    retention: float = 1.0
    lambda_chunk: int | None = None

    def __post_init__(self) -> None:
        if self.story is None:
            if self.retention != 1.0:
                raise ValueError("an undamaged scenario must retain full stiffness")
        else:
            if not 0.0 < self.retention < 1.0:
                raise ValueError("a damaged scenario needs retention in (0, 1)")
            if self.lambda_chunk is None or self.lambda_chunk < 1:
                raise ValueError("a damaged scenario needs lambda_chunk >= 1")

    @classmethod
    def undamaged(cls) -> "DamageScenario":
        return cls()

    @property
    def is_damaged(self) -> bool:
        return self.story is not None


@dataclass
class Excitation:
    """White-noise forcing: seed, per-story force scale, sampling, duration."""

    seed: int
    intensity: float
    sample_rate: float
    duration_s: float
    noise_snr_db: float | None = 40.0

    def __post_init__(self) -> None:
        if self.sample_rate <= 0 or self.duration_s <= 0:
            raise ValueError("sample_rate and duration_s must be positive")
        if self.intensity < 0:
            raise ValueError("intensity must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration_s))


def _modal(model: ShearFrameModel, k_mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        w2, phi = scipy.linalg.eigh(k_mat, model.mass_matrix())
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as err:
        raise EigenFailure(str(err)) from err
    if np.any(w2 <= 0) or not np.all(np.isfinite(w2)):
        raise EigenFailure("non-positive or non-finite eigenvalue; stiffness matrix not PD")
    return np.sqrt(w2), phi


def modal_frequencies(model: ShearFrameModel, stiffnesses: np.ndarray | None = None) -> np.ndarray:
    """Natural frequencies in Hz, ascending, from K phi = w^2 M phi."""
    omega, _ = _modal(model, model.stiffness_matrix(stiffnesses))
    return omega / (2.0 * np.pi)


def damping_matrix(model: ShearFrameModel, k_mat: np.ndarray) -> np.ndarray:
    """Damping matrix realizing the modal damping ratios for the given stiffness."""
    omega, phi = _modal(model, k_mat)
    m_mat = model.mass_matrix()
    return m_mat @ phi @ np.diag(2.0 * model.zeta * omega) @ phi.T @ m_mat


def _zoh_system(model: ShearFrameModel, k_mat: np.ndarray, dt: float):
    s = model.stories
    m_inv = np.diag(1.0 / model.masses)
    c_mat = damping_matrix(model, k_mat)
    a = np.block(
        [
            [np.zeros((s, s)), np.eye(s)],
            [-m_inv @ k_mat, -m_inv @ c_mat],
        ]
    )
    b = np.vstack([np.zeros((s, s)), m_inv])
    # absolute accelerations: qdd = -M^-1 K q - M^-1 C qd + M^-1 u
    c_out = np.hstack([-m_inv @ k_mat, -m_inv @ c_mat])
    d_out = m_inv
    ad, bd, cd, dd, _ = cont2discrete((a, b, c_out, d_out), dt, method="zoh")
    return ad, bd, cd, dd


def _lti_response_loop(ad, bd, cd, dd, forces, x0):
    n = forces.shape[0]
    x = x0.copy()
    out = np.empty((n, cd.shape[0]))
    for i in range(n):
        out[i] = cd @ x + dd @ forces[i]
        x = ad @ x + bd @ forces[i]
    return out, x


def _lti_response(ad, bd, cd, dd, forces, x0):
    """Run x[n+1] = Ad x[n] + Bd u[n], y[n] = Cd x[n] + Dd u[n] over all samples.

    The recursion is diagonalized so the per-mode scalar updates run as
    C-speed IIR filters; the plain loop is kept as a fallback for badly
    conditioned eigenvector matrices. Returns (outputs, final state).
    """
    try:
        evals, vecs = np.linalg.eig(ad)
    except np.linalg.LinAlgError:
        return _lti_response_loop(ad, bd, cd, dd, forces, x0)
    if np.linalg.cond(vecs) > 1e10:
        return _lti_response_loop(ad, bd, cd, dd, forces, x0)
    w = np.linalg.solve(vecs, bd @ forces.T)  # (2S, n) complex
    z0 = np.linalg.solve(vecs, x0.astype(complex))
    z = np.empty_like(w)
    z_final = np.empty_like(z0)
    for i in range(evals.size):
        zi, zf = lfilter([0.0, 1.0], [1.0, -evals[i]], w[i], zi=np.array([z0[i]]))
        z[i] = zi
        z_final[i] = zf[0]
    x_path = (vecs @ z).real
    x_end = (vecs @ z_final).real
    out = x_path.T @ cd.T + forces @ dd.T
    return out, x_end


def response_to_forces(
    model: ShearFrameModel,
    scenario: DamageScenario,
    forces: np.ndarray,
    sample_rate: float,
    chunk_size: int,
) -> np.ndarray:
    """Absolute story accelerations under a given force history.

    The stiffness matrix switches to the damaged one at the first sample of
    chunk ``lambda_chunk``; the state carries over continuously. The force
    array has one column per story.
    """
    forces = np.atleast_2d(np.asarray(forces, dtype=float))
    n = forces.shape[0]
    if forces.shape[1] != model.stories:
        raise ConfigError("force history needs one column per story")
    dt = 1.0 / sample_rate
    healthy = _zoh_system(model, model.stiffness_matrix(), dt)
    x0 = np.zeros(2 * model.stories)

    if not scenario.is_damaged:
        out, _ = _lti_response(*healthy, forces, x0)
        return out

    switch = (scenario.lambda_chunk - 1) * chunk_size
    if n < scenario.lambda_chunk * chunk_size:
        raise ConfigError(
            f"duration covers {n // chunk_size} chunks; damage at chunk "
            f"{scenario.lambda_chunk} needs at least {scenario.lambda_chunk}"
        )
    if scenario.story < 1 or scenario.story > model.stories:
        raise ConfigError(f"damaged story {scenario.story} outside 1..{model.stories}")
    k_damaged = model.stiffnesses.copy()
    k_damaged[scenario.story - 1] *= scenario.retention
    damaged = _zoh_system(model, model.stiffness_matrix(k_damaged), dt)

    if switch == 0:
        out, _ = _lti_response(*damaged, forces, x0)
        return out
    pre, x_switch = _lti_response(*healthy, forces[:switch], x0)
    post, _ = _lti_response(*damaged, forces[switch:], x_switch)
    return np.vstack([pre, post])


@dataclass
class SimulationResult:
    """Labeled output: sensor signals plus the ground truth that produced them."""

    time: np.ndarray
    signals: np.ndarray  # (n_samples, n_sensors)
    sensor_ids: list[int]
    sensor_stories: list[int]
    sample_rate: float
    chunk_size: int
    lambda_chunk: int | None
    seed: int
    model: ShearFrameModel = field(repr=False, default=None)
    scenario: DamageScenario = field(repr=False, default=None)

    @property
    def column_names(self) -> list[str]:
        return [f"sensor_{i}" for i in self.sensor_ids]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("time," + ",".join(self.column_names) + "\n")
            for i in range(self.time.size):
                row = [format(self.time[i], ".6f")]
                row += [format(v, ".12g") for v in self.signals[i]]
                fh.write(",".join(row) + "\n")

    def metadata(self) -> dict:
        return {
            "chunk_size": self.chunk_size,
            "sample_rate": self.sample_rate,
            "lambda_chunk": self.lambda_chunk,
            "n_samples": int(self.time.size),
            "seed": self.seed,
            "damaged_story": self.scenario.story if self.scenario else None,
            "retention": self.scenario.retention if self.scenario else None,
            "sensors": [
                {"column": name, "id": sid, "story": story, "position": f"story_{story}"}
                for name, sid, story in zip(self.column_names, self.sensor_ids, self.sensor_stories)
            ],
        }

    def metadata_to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def simulate(
    model: ShearFrameModel,
    scenario: DamageScenario,
    excitation: Excitation,
    chunk_size: int,
    sensors_per_story: int = 1,
) -> SimulationResult:
    """Generate a labeled vibration data set for one scenario.

    Independent white-noise forces per story, deterministic given the seed;
    each sensor reports its story's absolute acceleration plus measurement
    noise scaled to ``noise_snr_db`` below the per-channel RMS.
    """
    if chunk_size < 2:
        raise ConfigError("chunk_size must be >= 2")
    if sensors_per_story < 1:
        raise ConfigError("sensors_per_story must be >= 1")
    n = excitation.n_samples
    if n < chunk_size:
        raise ConfigError("duration shorter than a single chunk")
    rng = np.random.default_rng(excitation.seed)
    forces = rng.normal(0.0, excitation.intensity, size=(n, model.stories)) if excitation.intensity > 0 else np.zeros((n, model.stories))
    accel = response_to_forces(model, scenario, forces, excitation.sample_rate, chunk_size)

    channels = []
    ids = []
    stories = []
    sid = 1
    for story in range(1, model.stories + 1):
        base = accel[:, story - 1]
        rms = float(np.sqrt(np.mean(base**2)))
        for _ in range(sensors_per_story):
            sig = base.copy()
            if excitation.noise_snr_db is not None and rms > 0.0:
                std = rms * 10.0 ** (-excitation.noise_snr_db / 20.0)
                sig = sig + rng.normal(0.0, std, size=n)
            channels.append(sig)
            ids.append(sid)
            stories.append(story)
            sid += 1

    return SimulationResult(
        time=np.arange(n) / excitation.sample_rate,
        signals=np.column_stack(channels),
        sensor_ids=ids,
        sensor_stories=stories,
        sample_rate=excitation.sample_rate,
        chunk_size=chunk_size,
        lambda_chunk=scenario.lambda_chunk if scenario.is_damaged else None,
        seed=excitation.seed,
        model=model,
        scenario=scenario,
    )
