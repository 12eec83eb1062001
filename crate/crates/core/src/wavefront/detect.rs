use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decay::{check_h_sequence, fit_decay, DecayFit, MAGNITUDE_FLOOR};
use super::fbi::{fbi_with_floor, refine_peak, FbiNormalization, PhaseGrid};
use crate::error::{Error, Result};
use crate::phase::PhasePoint;
use crate::quantum::WaveFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    InWf,
    Smooth,
    Inconclusive,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::InWf => "in_WF",
            Self::Smooth => "smooth",
            Self::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Detection thresholds and transform settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WfParams {
    pub h_sequence: Vec<f64>,
    pub s_thr: f64,
    pub s_smooth: f64,
    pub residual_cap: f64,
    pub normalization: FbiNormalization,
}

impl Default for WfParams {
    fn default() -> Self {
        Self {
            h_sequence: (3..=7).map(|k| 2f64.powi(-k)).collect(),
            s_thr: 1.5,
            s_smooth: 3.0,
            residual_cap: 0.15,
            normalization: FbiNormalization::Raw,
        }
    }
}

impl WfParams {
    pub fn with_h_sequence(mut self, hs: Vec<f64>) -> Self {
        self.h_sequence = hs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_h_sequence(&self.h_sequence)?;
        if !(self.s_thr < self.s_smooth) || !(self.residual_cap > 0.0) {
            return Err(Error::Input("need s_thr < s_smooth and a positive residual cap".into()));
        }
        Ok(())
    }

    pub fn classify(&self, fit: &DecayFit) -> Classification {
        if fit.floor_limited || fit.slope >= self.s_smooth {
            Classification::Smooth
        } else if fit.slope <= self.s_thr && fit.residual <= self.residual_cap {
            Classification::InWf
        } else {
            Classification::Inconclusive
        }
    }
}

/// Refined magnitude maximum of `|T_h u_h|` on the region at one `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub h: f64,
    pub point: PhasePoint,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfReport {
    pub points: Vec<PhasePoint>,
    pub fits: Vec<DecayFit>,
    pub classification: Vec<Classification>,
    pub h_sequence: Vec<f64>,
    pub s_thr: f64,
    pub s_smooth: f64,
    pub residual_cap: f64,
    pub peaks: Vec<Peak>,
}

impl WfReport {
    pub fn exponents(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.slope).collect()
    }

    pub fn in_wf(&self) -> Vec<&PhasePoint> {
        self.points
            .iter()
            .zip(&self.classification)
            .filter(|(_, c)| **c == Classification::InWf)
            .map(|(p, _)| p)
            .collect()
    }

    /// Peak at the smallest `h`.
    pub fn finest_peak(&self) -> Option<&Peak> {
        self.peaks.iter().min_by(|a, b| a.h.total_cmp(&b.h))
    }

    /// Mean of the in_WF points, if any.
    pub fn in_wf_centroid(&self) -> Option<PhasePoint> {
        let pts = self.in_wf();
        let first = pts.first()?;
        let n = pts.len() as f64;
        let mut c = PhasePoint {
            x: vec![0.0; first.dim()],
            xi: vec![0.0; first.dim()],
        };
        for p in &pts {
            for a in 0..p.dim() {
                c.x[a] += p.x[a] / n;
                c.xi[a] += p.xi[a] / n;
            }
        }
        Some(c)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.points.first().map_or(1, |p| p.dim());
        let mut h: Vec<String> = (0..n).map(|a| format!("x{a}")).collect();
        h.extend((0..n).map(|a| format!("xi{a}")));
        h.extend(["exponent", "residual", "classification"].map(String::from));
        h
    }

    /// One record per point; a floor-limited exponent is written as `inf`.
    pub fn csv_records(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .zip(&self.fits)
            .zip(&self.classification)
            .map(|((p, f), c)| {
                let mut r: Vec<String> = p.x.iter().chain(&p.xi).map(|v| format!("{v:.6}")).collect();
                r.push(if f.floor_limited {
                    "inf".into()
                } else {
                    format!("{:.4}", f.slope)
                });
                r.push(format!("{:.4}", f.residual));
                r.push(c.to_string());
                r
            })
            .collect()
    }
}

/// Maps the decay exponent over `region` and classifies every point.
///
/// `family(h)` supplies the state at each `h`; a fixed function is passed as
/// a closure returning the same state.
pub fn wf_detect<F>(family: F, region: &PhaseGrid, params: &WfParams) -> Result<WfReport>
where
    F: Fn(f64) -> Result<WaveFunction> + Sync,
{
    params.validate()?;
    region.validate()?;
    let hs = &params.h_sequence;
    let per_h: Vec<(Vec<f64>, Vec<f64>)> = hs
        .par_iter()
        .map(|&h| fbi_with_floor(&family(h)?, h, region, params.normalization))
        .collect::<Result<_>>()?;
    let peaks = hs
        .iter()
        .zip(&per_h)
        .filter_map(|(&h, (mags, _))| {
            let point = refine_peak(region, mags)?;
            let magnitude = mags.iter().copied().fold(0.0, f64::max);
            Some(Peak { h, point, magnitude })
        })
        .collect();
    let fits: Vec<DecayFit> = (0..region.len())
        .map(|i| {
            let mags: Vec<f64> = per_h.iter().map(|(m, _)| m[i]).collect();
            let floors: Vec<f64> = per_h.iter().map(|(_, f)| f[i].max(MAGNITUDE_FLOOR)).collect();
            fit_decay(hs, &mags, &floors)
        })
        .collect();
    Ok(WfReport {
        points: region.points(),
        classification: fits.iter().map(|f| params.classify(f)).collect(),
        fits,
        h_sequence: hs.clone(),
        s_thr: params.s_thr,
        s_smooth: params.s_smooth,
        residual_cap: params.residual_cap,
        peaks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{coherent_state, SpatialGrid};
    use crate::wavefront::fbi::AxisRange;
    use num_complex::Complex64;

    fn region(x: (f64, f64), xi: (f64, f64), count: usize) -> PhaseGrid {
        PhaseGrid::new(
            vec![AxisRange::new(x.0, x.1, count).unwrap()],
            vec![AxisRange::new(xi.0, xi.1, count).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn coherent_family_forms_one_cluster() {
        let grid = SpatialGrid::uniform(1, 1024, 8.0).unwrap();
        let params = WfParams::default();
        let centre = PhasePoint::new1(0.5, 0.5);
        let r = region((-0.5, 1.5), (-0.5, 1.5), 21);
        let report = wf_detect(|h| coherent_state(&grid, h, &[0.5], &[0.5]), &r, &params).unwrap();
        let hits = report.in_wf();
        assert!(!hits.is_empty());
        let hmin: f64 = 1.0 / 128.0;
        assert!(hits.iter().all(|p| p.distance(&centre) < 0.5));
        assert!(report.in_wf_centroid().unwrap().distance(&centre) < hmin.sqrt());
        for pk in &report.peaks {
            assert!(pk.point.distance(&centre) < 1e-3, "{pk:?}");
        }
        assert_eq!(report.csv_records().len(), 441);
        assert_eq!(report.csv_header().len(), 5);
    }

    #[test]
    fn gaussian_has_no_wavefront_points() {
        let grid = SpatialGrid::uniform(1, 2048, 8.0).unwrap();
        let u = WaveFunction::from_fn(grid, None, |x| Complex64::new((-0.5 * x[0] * x[0]).exp(), 0.0));
        let r = region((-1.0, 1.0), (1.0, 2.0), 5);
        let report = wf_detect(|_| Ok(u.clone()), &r, &WfParams::default()).unwrap();
        assert!(report.classification.iter().all(|c| *c == Classification::Smooth));
    }

    #[test]
    fn parity_reflects_the_report() {
        let grid = SpatialGrid::uniform(1, 1024, 8.0).unwrap();
        let params = WfParams::default().with_h_sequence(vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]);
        let fam = |h: f64| coherent_state(&grid, h, &[0.4], &[0.6]);
        let r = region((-1.0, 1.0), (-1.0, 1.0), 9);
        let a = wf_detect(fam, &r, &params).unwrap();
        let b = wf_detect(|h| Ok(fam(h)?.reflect()), &r, &params).unwrap();
        let n = 9;
        for i in 0..n {
            for j in 0..n {
                let fa = &a.fits[i * n + j];
                let fb = &b.fits[(n - 1 - i) * n + (n - 1 - j)];
                for (ma, mb) in fa.magnitudes.iter().zip(&fb.magnitudes) {
                    assert!((ma - mb).abs() <= 1e-12 * ma.max(1e-300) + 1e-14);
                }
                assert_eq!(a.classification[i * n + j], b.classification[(n - 1 - i) * n + (n - 1 - j)]);
            }
        }
    }
}
