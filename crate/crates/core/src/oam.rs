//! OAM mode bookkeeping: the IDFT beamforming basis, the low/high-order mode
//! partition and the index-modulation combinations.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::channel::CMatrix;
use crate::error::{Error, Result};
use crate::geometry::SceneGeometry;

pub type CVector = DVector<Complex64>;

/// Mode labels `-(N/2)+1 ..= N/2` in column order: column `c` carries the
/// label congruent to `c` modulo N.
pub fn mode_labels(n: usize) -> Vec<i32> {
    let n = n as i32;
    (0..n).map(|c| if c <= n / 2 { c } else { c - n }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OamBasis {
    /// Columns `f_l = N^{-1/2} [e^{j l φ_1}, ..., e^{j l φ_N}]^T`.
    pub f: CMatrix,
    pub modes: Vec<i32>,
}

impl OamBasis {
    pub fn new(n: usize, alpha_a: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("scene.n", "must be at least 2"));
        }
        let modes = mode_labels(n);
        let scale = 1.0 / (n as f64).sqrt();
        let f = CMatrix::from_fn(n, n, |row, col| {
            let phi = std::f64::consts::TAU * row as f64 / n as f64 + alpha_a;
            Complex64::from_polar(scale, modes[col] as f64 * phi)
        });
        Ok(Self { f, modes })
    }

    pub fn from_scene(g: &SceneGeometry) -> Result<Self> {
        Self::new(g.n, g.alpha_a)
    }

    pub fn n(&self) -> usize {
        self.modes.len()
    }

    /// Column of `F` (and antenna row used by Eve) associated with mode `l`.
    pub fn index_of(&self, l: i32) -> Result<usize> {
        let n = self.n() as i32;
        let lo = -(n / 2) + 1;
        if l < lo || l > n / 2 {
            return Err(Error::param(
                "mode",
                format!("label {l} outside {lo}..={}", n / 2),
            ));
        }
        Ok(l.rem_euclid(n) as usize)
    }

    pub fn column(&self, l: i32) -> Result<CVector> {
        Ok(self.f.column(self.index_of(l)?).into_owned())
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// `2^floor(log2(C(N_A-1, N_s-1) * C(N-N_A, N_z)))`.
pub fn combination_count(n: usize, n_low: usize, n_signal: usize, n_an: usize) -> Result<u128> {
    check_counts(n, n_low, n_signal, n_an)?;
    let total = binomial(n_low - 1, n_signal - 1) * binomial(n - n_low, n_an);
    Ok(1u128 << (127 - total.leading_zeros()))
}

fn check_counts(n: usize, n_low: usize, n_signal: usize, n_an: usize) -> Result<()> {
    if n_signal == 0 {
        return Err(Error::Infeasible(
            "at least one signal mode is required".into(),
        ));
    }
    if n_low < n_signal || n_low > n {
        return Err(Error::Infeasible(format!(
            "{n_signal} signal modes need at least as many low-order modes (have {n_low})"
        )));
    }
    if n - n_low < n_an {
        return Err(Error::Infeasible(format!(
            "{n_an} AN modes exceed the {} high-order modes",
            n - n_low
        )));
    }
    Ok(())
}

/// All k-subsets of `items`, lexicographic in position.
fn subsets(items: &[i32], k: usize) -> Vec<Vec<i32>> {
    let n = items.len();
    if k > n {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut out = Vec::new();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanParams {
    pub low_modes: Vec<i32>,
    pub high_modes: Vec<i32>,
    pub n_signal: usize,
    pub n_an: usize,
    pub combo_index: usize,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            low_modes: vec![0, 1, -1, -2],
            high_modes: vec![2, -3, 3, 4],
            n_signal: 3,
            n_an: 3,
            combo_index: 0,
        }
    }
}

impl PlanParams {
    /// Every mode carries signal, no AN.
    pub fn all_signal(n: usize) -> Self {
        let mut low = mode_labels(n);
        low.sort_by_key(|&l| (l.abs(), l < 0));
        Self {
            low_modes: low,
            high_modes: Vec::new(),
            n_signal: n,
            n_an: 0,
            combo_index: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let all: BTreeSet<i32> = mode_labels(n).into_iter().collect();
        let low: BTreeSet<i32> = self.low_modes.iter().copied().collect();
        let high: BTreeSet<i32> = self.high_modes.iter().copied().collect();
        if low.len() != self.low_modes.len() || high.len() != self.high_modes.len() {
            return Err(Error::param(
                "plan.low_modes/high_modes",
                "mode lists contain duplicates",
            ));
        }
        if !low.is_disjoint(&high) {
            return Err(Error::param(
                "plan.low_modes/high_modes",
                "low and high mode sets overlap",
            ));
        }
        let union: BTreeSet<i32> = low.union(&high).copied().collect();
        if union != all {
            return Err(Error::param(
                "plan.low_modes/high_modes",
                format!("low and high modes must partition {all:?}"),
            ));
        }
        if !low.contains(&0) {
            return Err(Error::param("plan.low_modes", "must contain mode 0"));
        }
        check_counts(n, self.low_modes.len(), self.n_signal, self.n_an)
    }

    /// Every `(L_s, L_z)` pair in enumeration order, truncated to K.
    pub fn enumerate_combinations(&self, n: usize) -> Result<Vec<(Vec<i32>, Vec<i32>)>> {
        self.validate(n)?;
        let k = combination_count(n, self.low_modes.len(), self.n_signal, self.n_an)? as usize;
        let nonzero: Vec<i32> = self.low_modes.iter().copied().filter(|&l| l != 0).collect();
        let mut out = Vec::with_capacity(k);
        'outer: for sig in subsets(&nonzero, self.n_signal - 1) {
            for an in subsets(&self.high_modes, self.n_an) {
                if out.len() == k {
                    break 'outer;
                }
                let mut ls = vec![0];
                ls.extend(sig.iter().copied());
                out.push((ls, an));
            }
        }
        Ok(out)
    }
}

/// Active mode plan for one transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePlan {
    pub n: usize,
    pub low_modes: Vec<i32>,
    pub high_modes: Vec<i32>,
    pub signal_modes: Vec<i32>,
    pub an_modes: Vec<i32>,
    pub k: u128,
    pub combo_index: usize,
}

impl ModePlan {
    pub fn new(n: usize, params: &PlanParams) -> Result<Self> {
        let combos = params.enumerate_combinations(n)?;
        let k = combos.len() as u128;
        let (signal_modes, an_modes) =
            combos.get(params.combo_index).cloned().ok_or_else(|| {
                Error::param(
                    "plan.combo_index",
                    format!("{} out of range for K = {k}", params.combo_index),
                )
            })?;
        Ok(Self {
            n,
            low_modes: params.low_modes.clone(),
            high_modes: params.high_modes.clone(),
            signal_modes,
            an_modes,
            k,
            combo_index: params.combo_index,
        })
    }

    pub fn n_low(&self) -> usize {
        self.low_modes.len()
    }

    pub fn n_signal(&self) -> usize {
        self.signal_modes.len()
    }

    pub fn n_an(&self) -> usize {
        self.an_modes.len()
    }

    /// Index information carried per transmission, in bits.
    pub fn index_bits(&self) -> f64 {
        (self.k as f64).log2()
    }

    /// Binary label of the active combination, most significant bit first.
    pub fn index_label(&self) -> Vec<bool> {
        let bits = self.index_bits() as usize;
        (0..bits)
            .rev()
            .map(|b| (self.combo_index >> b) & 1 == 1)
            .collect()
    }
}
