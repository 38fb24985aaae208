//! Free-space line-of-sight channels between element pairs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{SceneGeometry, Vec3};

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Attenuation scalar.
    pub beta: f64,
    /// Wavelength in meters.
    pub wavelength: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        // 3 GHz; makes the 0.05 m RIS pitch half a wavelength.
        Self {
            beta: 1.0,
            wavelength: 0.1,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("channel.beta", "must be positive"));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::param("channel.wavelength", "must be positive"));
        }
        Ok(())
    }
}

/// Spherical-wave coefficient `βλ/(4πd) · exp(-j2πd/λ)` between two points.
pub fn los_coefficient(tx: &Vec3, rx: &Vec3, params: &ChannelParams) -> Result<Complex64> {
    let d = (rx - tx).norm();
    if d <= 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    let lambda = params.wavelength;
    let amplitude = params.beta * lambda / (4.0 * PI * d);
    Ok(Complex64::from_polar(amplitude, -2.0 * PI * d / lambda))
}

/// Matrix with entry `[r][c]` = coefficient from `tx[c]` to `rx[r]`.
pub fn los_matrix(tx: &[Vec3], rx: &[Vec3], params: &ChannelParams) -> Result<CMatrix> {
    let mut h = CMatrix::zeros(rx.len(), tx.len());
    for (r, prx) in rx.iter().enumerate() {
        for (c, ptx) in tx.iter().enumerate() {
            h[(r, c)] = los_coefficient(ptx, prx, params)?;
        }
    }
    Ok(h)
}

/// The five LoS channels of the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Alice to Bob, N x N.
    pub ab: CMatrix,
    /// Alice to RIS, Q x N.
    pub ar: CMatrix,
    /// RIS to Bob, N x Q.
    pub rb: CMatrix,
    /// Alice to Eve, N x N.
    pub ae: CMatrix,
    /// RIS to Eve, N x Q.
    pub re: CMatrix,
}

impl ChannelSet {
    pub fn n(&self) -> usize {
        self.ab.nrows()
    }

    pub fn q(&self) -> usize {
        self.ar.nrows()
    }

    /// Same direct links with the RIS removed (Q = 0).
    pub fn without_ris(&self) -> Self {
        let n = self.n();
        Self {
            ab: self.ab.clone(),
            ar: CMatrix::zeros(0, n),
            rb: CMatrix::zeros(n, 0),
            ae: self.ae.clone(),
            re: CMatrix::zeros(n, 0),
        }
    }

    pub fn check_dims(&self) -> Result<()> {
        let (n, q) = (self.n(), self.q());
        let ok = self.ab.shape() == (n, n)
            && self.ar.shape() == (q, n)
            && self.rb.shape() == (n, q)
            && self.ae.shape() == (n, n)
            && self.re.shape() == (n, q);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "channel set shapes ab={:?} ar={:?} rb={:?} ae={:?} re={:?}",
                self.ab.shape(),
                self.ar.shape(),
                self.rb.shape(),
                self.ae.shape(),
                self.re.shape()
            )))
        }
    }

    /// Debug dump: `matrix,row,col,re,im` for every entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("matrix,row,col,re,im\n");
        for (name, m) in [
            ("H_AB", &self.ab),
            ("H_AR", &self.ar),
            ("H_RB", &self.rb),
            ("H_AE", &self.ae),
            ("H_RE", &self.re),
        ] {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    let v = m[(r, c)];
                    let _ = writeln!(out, "{name},{r},{c},{:.17e},{:.17e}", v.re, v.im);
                }
            }
        }
        out
    }
}

pub fn build_channels(g: &SceneGeometry, params: &ChannelParams) -> Result<ChannelSet> {
    g.validate()?;
    params.validate()?;
    let alice = g.alice_elements();
    let bob = g.bob_elements();
    let eve = g.eve_elements();
    let ris = g.ris_elements();
    Ok(ChannelSet {
        ab: los_matrix(&alice, &bob, params)?,
        ar: los_matrix(&alice, &ris, params)?,
        rb: los_matrix(&ris, &bob, params)?,
        ae: los_matrix(&alice, &eve, params)?,
        re: los_matrix(&ris, &eve, params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> ChannelParams {
        ChannelParams::default()
    }

    #[test]
    fn coefficient_examples() {
        let p = params();
        let lam = p.wavelength;
        let o = Vec3::zeros();
        let h = los_coefficient(&o, &Vec3::new(lam, 0.0, 0.0), &p).unwrap();
        assert_abs_diff_eq!(h.re, 1.0 / (4.0 * PI), epsilon = 1e-12);
        assert_abs_diff_eq!(h.im, 0.0, epsilon = 1e-12);

        let h = los_coefficient(&o, &Vec3::new(0.0, 2.0 * lam, 0.0), &p).unwrap();
        assert_abs_diff_eq!(h.re, 1.0 / (8.0 * PI), epsilon = 1e-12);
        assert_abs_diff_eq!(h.im, 0.0, epsilon = 1e-12);

        let h = los_coefficient(&o, &Vec3::new(0.0, 0.0, lam / 2.0), &p).unwrap();
        assert_abs_diff_eq!(h.re, -0.159_154_943_091_895_33, epsilon = 1e-12);
        assert_abs_diff_eq!(h.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn coincident_points_rejected() {
        let o = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(
            los_coefficient(&o, &o, &params()),
            Err(Error::DegenerateGeometry)
        );
    }

    #[test]
    fn magnitude_and_phase_law() {
        let p = ChannelParams {
            beta: 2.5,
            wavelength: 0.07,
        };
        let a = Vec3::new(0.3, -1.0, 2.0);
        let b = Vec3::new(-4.0, 0.5, 17.0);
        let d = (b - a).norm();
        let h = los_coefficient(&a, &b, &p).unwrap();
        assert_abs_diff_eq!(h.norm(), 2.5 * 0.07 / (4.0 * PI * d), epsilon = 1e-15);
        let expected = Complex64::from_polar(1.0, -2.0 * PI * d / 0.07);
        assert_abs_diff_eq!((h / h.norm() - expected).norm(), 0.0, epsilon = 1e-9);
        // reciprocity
        assert_eq!(h, los_coefficient(&b, &a, &p).unwrap());
    }

    #[test]
    fn shapes_and_circulant_direct_link() {
        let g = SceneGeometry::default();
        let ch = build_channels(&g, &params()).unwrap();
        ch.check_dims().unwrap();
        assert_eq!(ch.ar.shape(), (150, 8));
        assert_eq!(ch.rb.shape(), (8, 150));
        let n = g.n;
        let mut dev: f64 = 0.0;
        for m in 0..n {
            for k in 0..n {
                let reference = ch.ab[((m + n - k) % n, 0)];
                dev = dev.max((ch.ab[(m, k)] - reference).norm());
            }
        }
        assert!(dev < 1e-12, "circulant deviation {dev}");

        let g1 = SceneGeometry {
            q_y: 1,
            q_z: 1,
            ..Default::default()
        };
        let ch1 = build_channels(&g1, &params()).unwrap();
        assert_eq!(ch1.ar.shape(), (1, 8));
        assert_eq!(ch1.rb.shape(), (8, 1));
        assert_eq!(ch1.without_ris().ar.shape(), (0, 8));
    }

    #[test]
    fn beta_scales_linearly() {
        let g = SceneGeometry::default();
        let a = build_channels(&g, &params()).unwrap();
        let b = build_channels(
            &g,
            &ChannelParams {
                beta: 3.0,
                ..params()
            },
        )
        .unwrap();
        assert!((&a.re * Complex64::from(3.0) - &b.re).camax() < 1e-15 * b.re.camax());
    }

    #[test]
    fn csv_dump_has_every_entry() {
        let g = SceneGeometry {
            q_y: 2,
            q_z: 1,
            n: 4,
            ..Default::default()
        };
        let ch = build_channels(&g, &params()).unwrap();
        let lines = ch.to_csv().lines().count();
        assert_eq!(lines, 1 + 16 + 8 + 8 + 16 + 8);
    }
}
