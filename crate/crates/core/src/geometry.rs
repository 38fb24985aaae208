//! Element coordinates of the transmitter, receiver and eavesdropper UCAs and
//! of the RIS panel.
//!
//! Alice sits at the origin with her array in the z = 0 plane, Bob is parallel
//! and aligned with her, Eve is placed in spherical coordinates around Alice and
//! tilted by two attitude rotations, and the RIS is a rectangular grid in a
//! plane of constant x. Element indices are 1-based.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI, TAU};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneGeometry {
    /// Number of elements on every UCA.
    pub n: usize,
    pub r_a: f64,
    pub r_b: f64,
    pub r_e: f64,
    /// Phase of the first element on each ring, radians.
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub alpha_e: f64,
    pub u_b: [f64; 3],
    pub u_r: [f64; 3],
    /// Distance from Alice's center to Eve's center.
    pub d: f64,
    /// Azimuth of Eve's center measured from +x in the transmit plane.
    pub eve_theta: f64,
    /// Angle between +z and the Alice-to-Eve line.
    pub eve_phi: f64,
    pub eve_rot_x: f64,
    pub eve_rot_y: f64,
    pub q_y: usize,
    pub q_z: usize,
    pub d_y: f64,
    pub d_z: f64,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        Self {
            n: 8,
            r_a: 0.2,
            r_b: 0.2,
            r_e: 0.2,
            alpha_a: 0.0,
            alpha_b: 0.0,
            alpha_e: 0.0,
            u_b: [0.0, 0.0, 20.0],
            u_r: [2.0, 0.0, 20.0],
            d: 10.0,
            eve_theta: 0.0,
            eve_phi: -PI / 20.0,
            eve_rot_x: FRAC_PI_4,
            eve_rot_y: FRAC_PI_4,
            q_y: 10,
            q_z: 15,
            d_y: 0.05,
            d_z: 0.05,
        }
    }
}

/// Alice's center is pinned to the origin.
pub const U_A: [f64; 3] = [0.0, 0.0, 0.0];

/// Point `index` (1-based, any integer) on a ring in the local xy-plane.
/// Wraps modulo `count`.
pub fn ring_offset(radius: f64, offset: f64, count: usize, index: i64) -> Vec3 {
    let phi = TAU * (index - 1) as f64 / count as f64 + offset;
    Vec3::new(radius * phi.cos(), radius * phi.sin(), 0.0)
}

pub fn rotation_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rotation_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

impl SceneGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("scene.n", "must be at least 2"));
        }
        for (name, v) in [
            ("scene.r_a", self.r_a),
            ("scene.r_b", self.r_b),
            ("scene.r_e", self.r_e),
            ("scene.d", self.d),
            ("scene.d_y", self.d_y),
            ("scene.d_z", self.d_z),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        if self.q_y == 0 || self.q_z == 0 {
            return Err(Error::param("scene.q_y/q_z", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of RIS elements.
    pub fn q(&self) -> usize {
        self.q_y * self.q_z
    }

    pub fn u_a(&self) -> Vec3 {
        Vec3::from(U_A)
    }

    pub fn u_b(&self) -> Vec3 {
        Vec3::from(self.u_b)
    }

    pub fn u_r(&self) -> Vec3 {
        Vec3::from(self.u_r)
    }

    pub fn eve_center(&self) -> Vec3 {
        let (st, ct) = self.eve_theta.sin_cos();
        let (sp, cp) = self.eve_phi.sin_cos();
        Vec3::new(self.d * sp * ct, self.d * sp * st, self.d * cp)
    }

    fn check(&self, array: &'static str, index: usize, len: usize) -> Result<()> {
        if index == 0 || index > len {
            Err(Error::IndexOutOfRange { array, index, len })
        } else {
            Ok(())
        }
    }

    pub fn alice_element(&self, n: usize) -> Result<Vec3> {
        self.check("alice", n, self.n)?;
        Ok(self.u_a() + ring_offset(self.r_a, self.alpha_a, self.n, n as i64))
    }

    pub fn bob_element(&self, m: usize) -> Result<Vec3> {
        self.check("bob", m, self.n)?;
        Ok(self.u_b() + ring_offset(self.r_b, self.alpha_b, self.n, m as i64))
    }

    pub fn eve_element(&self, v: usize) -> Result<Vec3> {
        self.check("eve", v, self.n)?;
        let attitude = rotation_y(self.eve_rot_y) * rotation_x(self.eve_rot_x);
        Ok(self.eve_center() + attitude * ring_offset(self.r_e, self.alpha_e, self.n, v as i64))
    }

    /// Maps the linear RIS index to its `(q_y, q_z)` grid position, q_y fastest.
    pub fn ris_grid_index(&self, q: usize) -> Result<(usize, usize)> {
        self.check("ris", q, self.q())?;
        Ok(((q - 1) % self.q_y + 1, (q - 1) / self.q_y + 1))
    }

    pub fn ris_element(&self, q: usize) -> Result<Vec3> {
        let (qy, qz) = self.ris_grid_index(q)?;
        let off_y = self.d_y * (qy as f64 + (-1.0 - self.q_y as f64) / 2.0);
        let off_z = self.d_z * (qz as f64 + (-1.0 - self.q_z as f64) / 2.0);
        Ok(self.u_r() + Vec3::new(0.0, off_y, off_z))
    }

    pub fn alice_elements(&self) -> Vec<Vec3> {
        (1..=self.n)
            .map(|i| self.alice_element(i).unwrap())
            .collect()
    }

    pub fn bob_elements(&self) -> Vec<Vec3> {
        (1..=self.n).map(|i| self.bob_element(i).unwrap()).collect()
    }

    pub fn eve_elements(&self) -> Vec<Vec3> {
        (1..=self.n).map(|i| self.eve_element(i).unwrap()).collect()
    }

    pub fn ris_elements(&self) -> Vec<Vec3> {
        (1..=self.q())
            .map(|i| self.ris_element(i).unwrap())
            .collect()
    }
}
