"""
Rigid-body transforms and ego poses.

A :class:`RigidTransform` ``T_ab = (R, t)`` maps points from frame ``b`` to
frame ``a``: ``p_a = R @ p_b + t``.  Rotations are stored as 3x3 matrices
(float64); composition follows matrix-product order, so ``compose(a, b)``
applies ``b`` first.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vital_occ_stream.core.exceptions import ContractViolation

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) transform stored as rotation matrix plus translation (meters)."""

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]

    def __post_init__(self) -> None:
        rotation = np.array(self.rotation, dtype=np.float64)
        translation = np.array(self.translation, dtype=np.float64).reshape(-1)
        if rotation.shape != (3, 3):
            raise ContractViolation(f"rotation must be 3x3, got {rotation.shape}")
        if translation.shape != (3,):
            raise ContractViolation(f"translation must be a 3-vector, got {translation.shape}")
        if not np.all(np.isfinite(rotation)) or not np.all(np.isfinite(translation)):
            raise ContractViolation("transform entries must be finite")
        deviation = np.abs(rotation.T @ rotation - np.eye(3)).max()
        if deviation > ORTHONORMAL_TOL:
            raise ContractViolation(f"rotation is not orthonormal (max |RᵀR - I| = {deviation:.3e})")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "RigidTransform":
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    @classmethod
    def from_yaw(cls, yaw: float, translation: ArrayLike = (0.0, 0.0, 0.0)) -> "RigidTransform":
        """Rotation of ``yaw`` radians about +z followed by ``translation``."""
        return cls(rotation_z(yaw), np.asarray(translation, dtype=np.float64))

    @classmethod
    def from_yaw_pitch(
        cls, yaw: float, pitch: float, translation: ArrayLike = (0.0, 0.0, 0.0)
    ) -> "RigidTransform":
        """``Rz(yaw) · Ry(pitch)`` followed by ``translation``; positive pitch tilts +x downward."""
        return cls(rotation_z(yaw) @ rotation_y(pitch), np.asarray(translation, dtype=np.float64))

    # ------------------------------------------------------------------
    # Operations
    # ------------------------------------------------------------------

    def inverse(self) -> "RigidTransform":
        r_inv = self.rotation.T
        return RigidTransform(r_inv, -(r_inv @ self.translation))

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        """Transform an ``(..., 3)`` array of points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def apply_vectors(self, vectors: ArrayLike) -> NDArray[np.float64]:
        """Rotate an ``(..., 3)`` array of directions (translation ignored)."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def is_identity(self) -> bool:
        """Exact identity check (no tolerance)."""
        return bool(np.array_equal(self.rotation, np.eye(3)) and not np.any(self.translation))

    def allclose(self, other: "RigidTransform", atol: float = 1e-6) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol, rtol=0.0)
            and np.allclose(self.translation, other.translation, atol=atol, rtol=0.0)
        )

    def equals(self, other: "RigidTransform") -> bool:
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __repr__(self) -> str:
        return (
            f"RigidTransform(rotation={self.rotation.round(6).tolist()}, "
            f"translation={self.translation.round(6).tolist()})"
        )


@dataclass(frozen=True, eq=False)
class EgoPose:
    """Ego-to-global pose at one timestep of a scene sequence."""

    timestep: int
    ego_to_global: RigidTransform

    @property
    def global_to_ego(self) -> RigidTransform:
        return self.ego_to_global.inverse()


# ---------------------------------------------------------------------------
# Free functions
# ---------------------------------------------------------------------------

def rotation_z(yaw: float) -> NDArray[np.float64]:
    """3x3 rotation about +z by ``yaw`` radians."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_y(pitch: float) -> NDArray[np.float64]:
    c, s = math.cos(pitch), math.sin(pitch)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return ``a ∘ b`` (apply ``b`` first, then ``a``)."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def relative_transform(prev: EgoPose, curr: EgoPose) -> RigidTransform:
    """Map points from the previous ego frame into the current ego frame.

    ``T = T_{g→e}^{t} · T_{e→g}^{t−1}``.  Identical poses short-circuit to the
    exact identity so stationary streams warp bit-exactly.
    """
    if prev.ego_to_global.equals(curr.ego_to_global):
        return RigidTransform.identity()
    return compose(curr.ego_to_global.inverse(), prev.ego_to_global)


def conjugate(transform: RigidTransform, frame_to_ego: RigidTransform) -> RigidTransform:
    """Express an ego-frame motion in a sensor frame rigidly mounted on the ego.

    Returns ``F⁻¹ · T · F`` where ``F`` maps sensor coordinates to ego.
    """
    if frame_to_ego.is_identity():
        return transform
    return compose(frame_to_ego.inverse(), compose(transform, frame_to_ego))

