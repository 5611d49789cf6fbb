//! Execution-impact surface over volume and participation rate, with the
//! companion global-imbalance picture.

use std::collections::BTreeMap;

use super::{ImpactError, ImpactSummary};
use crate::segmenter::MetaOrder;
use crate::tape::{Tape, TapeIndex};

/// Two-dimensional logarithmic binning for the surface.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceBinning {
    pub q_bins_per_decade: usize,
    pub muv_bins_per_decade: usize,
    pub n_min: usize,
}

impl Default for SurfaceBinning {
    fn default() -> Self {
        SurfaceBinning {
            q_bins_per_decade: 8,
            muv_bins_per_decade: 4,
            n_min: 50,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SurfaceCell {
    pub q_bin: i32,
    pub muv_bin: i32,
    /// Geometric centers.
    pub q_center: f64,
    pub muv_center: f64,
    pub mean_exec: f64,
    /// Mean sign-adjusted global imbalance `s * V_M^signed` over the
    /// execution window, in BTC.
    pub mean_imbalance: f64,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct ImpactSurface {
    /// Cells meeting the population minimum.
    pub cells: Vec<SurfaceCell>,
    /// `(q_bin, muv_bin, n)` of masked cells; they carry no values.
    pub masked: Vec<(i32, i32, usize)>,
    pub binning: SurfaceBinning,
}

impl ImpactSurface {
    /// Total metaorders contributed (unmasked plus masked cells).
    pub fn n_total(&self) -> usize {
        self.cells.iter().map(|c| c.n).sum::<usize>()
            + self.masked.iter().map(|m| m.2).sum::<usize>()
    }

    /// `(imbalance, mean_exec, weight)` triples for the global-imbalance
    /// collapse, restricted to cells with positive values.
    pub fn imbalance_points(&self) -> Vec<(f64, f64, f64)> {
        self.cells
            .iter()
            .filter(|c| c.mean_imbalance > 0.0 && c.mean_exec > 0.0)
            .map(|c| (c.mean_imbalance, c.mean_exec, c.n as f64))
            .collect()
    }
}

/// Per-cell mean execution impact and mean sign-adjusted market imbalance,
/// over log-spaced volume and participation-rate bins.
pub fn impact_surface(
    summaries: &[ImpactSummary],
    metaorders: &[MetaOrder],
    tape: &Tape,
    index: &TapeIndex,
    binning: SurfaceBinning,
) -> ImpactSurface {
    debug_assert_eq!(summaries.len(), metaorders.len());
    struct Acc {
        n: usize,
        exec_sum: f64,
        imb_sum: f64,
    }
    let meta = tape.meta();
    let mut cells: BTreeMap<(i32, i32), Acc> = BTreeMap::new();
    for (s, m) in summaries.iter().zip(metaorders) {
        if s.q_btc <= 0.0 || s.mu_v <= 0.0 {
            continue;
        }
        let qb = (s.q_btc.log10() * binning.q_bins_per_decade as f64).floor() as i32;
        let mb = (s.mu_v.log10() * binning.muv_bins_per_decade as f64).floor() as i32;
        let signed = index.signed_volume_in(tape, m.window());
        let imbalance = s.sign as f64 * meta.volume_i128_to_f64(signed);
        let acc = cells.entry((qb, mb)).or_insert(Acc {
            n: 0,
            exec_sum: 0.0,
            imb_sum: 0.0,
        });
        acc.n += 1;
        acc.exec_sum += s.exec;
        acc.imb_sum += imbalance;
    }

    let mut out = Vec::new();
    let mut masked = Vec::new();
    for ((qb, mb), acc) in cells {
        if acc.n >= binning.n_min.max(1) {
            out.push(SurfaceCell {
                q_bin: qb,
                muv_bin: mb,
                q_center: 10f64.powf((qb as f64 + 0.5) / binning.q_bins_per_decade as f64),
                muv_center: 10f64.powf((mb as f64 + 0.5) / binning.muv_bins_per_decade as f64),
                mean_exec: acc.exec_sum / acc.n as f64,
                mean_imbalance: acc.imb_sum / acc.n as f64,
                n: acc.n,
            });
        } else {
            masked.push((qb, mb, acc.n));
        }
    }
    ImpactSurface {
        cells: out,
        masked,
        binning,
    }
}

/// Exponents of `I_exec ~ Q^delta / mu_V^delta_prime`, fitted by weighted
/// least squares in log space over the unmasked cells with positive means.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SurfaceFit {
    pub delta: f64,
    pub delta_prime: f64,
    pub prefactor: f64,
    pub n_cells: usize,
}

impl ImpactSurface {
    pub fn fit_exponents(&self) -> Result<SurfaceFit, ImpactError> {
        // Rows: ln(exec) = a + delta * ln(q) - delta_prime * ln(mu_v).
        let rows: Vec<(f64, f64, f64, f64)> = self
            .cells
            .iter()
            .filter(|c| c.mean_exec > 0.0)
            .map(|c| (c.q_center.ln(), c.muv_center.ln(), c.mean_exec.ln(), c.n as f64))
            .collect();
        if rows.len() < 4 {
            return Err(ImpactError::AllBinsUnderPopulated {
                n_min: self.binning.n_min,
            });
        }
        // Weighted normal equations for [a, b, c] in v = a + b*u1 + c*u2.
        let mut m = [[0f64; 3]; 3];
        let mut rhs = [0f64; 3];
        for &(u1, u2, v, w) in &rows {
            let x = [1.0, u1, u2];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += w * x[i] * x[j];
                }
                rhs[i] += w * x[i] * v;
            }
        }
        let sol = solve3(m, rhs).ok_or(ImpactError::AllBinsUnderPopulated {
            n_min: self.binning.n_min,
        })?;
        Ok(SurfaceFit {
            delta: sol[1],
            delta_prime: -sol[2],
            prefactor: sol[0].exp(),
            n_cells: rows.len(),
        })
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()
        })?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = m[col];
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = m[row][col] / pivot_row[col];
            for (dst, src) in m[row].iter_mut().zip(pivot_row.iter()) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    Some([b[0] / m[0][0], b[1] / m[1][1], b[2] / m[2][2]])
}
