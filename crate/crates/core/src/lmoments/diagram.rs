//! L-moment ratio diagram: sample points over the (τ3, τ4) curves of the
//! common three-parameter families, the two-parameter reference points, and
//! the bounds of the Kappa region.
//!
//! Curve values come from quadrature of each family's quantile function and
//! are cached in `data/ratio_curves.csv`; [`generate_reference_curves`]
//! rebuilds the cache.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{glo_tau4, tau4_lower_limit, LMoments};
use crate::distfit::{fit_pe3, kappa_tau34, KappaParams};
use crate::numeric::{bisect, quantile_lmoments};

const CACHE: &str = include_str!("../../data/ratio_curves.csv");

/// Curves are tabulated for |τ3| up to this.
pub const CURVE_TAU3_MAX: f64 = 0.9;
/// Spacing of the cached curve grid.
pub const CACHE_STEP: f64 = 0.01;

const QUAD_TOL: f64 = 1e-11;

pub const CURVE_FAMILIES: [&str; 5] = ["PE3", "GEV", "GLO", "GNO", "GPA"];
/// GUM is the Gumbel law.
pub const POINT_FAMILIES: [&str; 5] = ["EXP", "NOR", "GUM", "RAY", "UNI"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub tau3: f64,
    pub tau4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub label: String,
    pub tau3: f64,
    pub tau4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub points: Vec<RatioPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioDiagramDataset {
    pub sample_points: Vec<LabeledPoint>,
    pub curves: Vec<Curve>,
    pub reference_points: Vec<LabeledPoint>,
    /// `GLO` upper edge and `LIMIT` lower bound.
    pub bounds: Vec<Curve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCurves {
    pub curves: Vec<Curve>,
    pub points: Vec<LabeledPoint>,
}

impl ReferenceCurves {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,label,tau3,tau4\n");
        for c in &self.curves {
            for p in &c.points {
                let _ = writeln!(out, "curve,{},{},{}", c.name, p.tau3, p.tau4);
            }
        }
        for p in &self.points {
            let _ = writeln!(out, "point,{},{},{}", p.label, p.tau3, p.tau4);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut curves: Vec<Curve> = Vec::new();
        let mut points = Vec::new();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let num = |k: usize| -> Result<f64, String> {
                rec.get(k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| format!("bad number in record {}", i + 1))
            };
            let (t3, t4) = (num(2)?, num(3)?);
            let label = rec.get(1).unwrap_or_default().to_string();
            match rec.get(0) {
                Some("curve") => {
                    if curves.last().map(|c| c.name != label).unwrap_or(true) {
                        curves.push(Curve {
                            name: label,
                            points: Vec::new(),
                        });
                    }
                    curves.last_mut().unwrap().points.push(RatioPoint { tau3: t3, tau4: t4 });
                }
                Some("point") => points.push(LabeledPoint {
                    label,
                    tau3: t3,
                    tau4: t4,
                }),
                other => return Err(format!("unknown series {other:?}")),
            }
        }
        Ok(Self { curves, points })
    }
}

/// The cached curves shipped with the crate.
pub fn reference_curves() -> ReferenceCurves {
    ReferenceCurves::from_csv(CACHE).expect("bundled ratio curve cache is well formed")
}

fn ratios(l: [f64; 4]) -> RatioPoint {
    RatioPoint {
        tau3: l[2] / l[1],
        tau4: l[3] / l[1],
    }
}

fn kappa_ratios(k: f64, h: f64) -> RatioPoint {
    let p = KappaParams::new(0.0, 1.0, k, h).expect("unit scale is valid");
    ratios(quantile_lmoments(|u, v| p.quantile_split(u, v), QUAD_TOL))
}

fn std_normal_quantile(u: f64, v: f64) -> f64 {
    let n = Normal::standard();
    if u < 0.5 {
        n.inverse_cdf(u)
    } else {
        -n.inverse_cdf(v)
    }
}

/// Generalized normal (three-parameter lognormal) with unit scale.
fn gno_quantile(k: f64, u: f64, v: f64) -> f64 {
    let z = std_normal_quantile(u, v);
    if k.abs() < 1e-10 {
        z
    } else {
        -(-k * z).exp_m1() / k
    }
}

fn gno_ratios(k: f64) -> RatioPoint {
    ratios(quantile_lmoments(|u, v| gno_quantile(k, u, v), QUAD_TOL))
}

/// Shape of a three-parameter family with the given τ3, then (τ3, τ4) by
/// quadrature at that shape.
fn family_point(family: &str, t3: f64) -> RatioPoint {
    match family {
        "GLO" => kappa_ratios(-t3, -1.0),
        "GPA" => kappa_ratios((1.0 - 3.0 * t3) / (1.0 + t3), 1.0),
        "GEV" => {
            let k = bisect(|k| kappa_tau34(k, 0.0).0 - t3, -0.999, 60.0, 1e-15, 400)
                .expect("GEV spans |tau3| < 1");
            kappa_ratios(k, 0.0)
        }
        "PE3" => {
            let lm = LMoments {
                lambda1: 0.0,
                lambda2: 1.0,
                tau3: t3,
                tau4: f64::NAN,
                n: 0,
            };
            let p = fit_pe3(&lm).expect("PE3 spans |tau3| < 1");
            ratios(quantile_lmoments(|u, v| p.quantile_split(u, v), QUAD_TOL))
        }
        "GNO" => {
            // τ3 is odd and decreasing in k
            let k = bisect(|k| gno_ratios(k).tau3 - t3, -4.0, 4.0, 1e-13, 200)
                .expect("GNO spans |tau3| <= 0.9 for |k| <= 4");
            gno_ratios(k)
        }
        other => panic!("unknown family {other}"),
    }
}

fn point_family(label: &str) -> RatioPoint {
    match label {
        "EXP" => kappa_ratios(0.0, 1.0),
        "NOR" => ratios(quantile_lmoments(std_normal_quantile, QUAD_TOL)),
        "GUM" => kappa_ratios(0.0, 0.0),
        "RAY" => ratios(quantile_lmoments(
            |u, v| {
                // √(-2 ln(1-u))
                let ln_v = if u < 0.5 { (-u).ln_1p() } else { v.ln() };
                (-2.0 * ln_v).sqrt()
            },
            QUAD_TOL,
        )),
        "UNI" => kappa_ratios(1.0, 1.0),
        other => panic!("unknown point family {other}"),
    }
}

/// Cached-grid τ3 values, `-0.9, -0.89, …, 0.9`.
fn cache_grid() -> Vec<f64> {
    let n = (CURVE_TAU3_MAX / CACHE_STEP).round() as i64;
    (-n..=n).map(|i| i as f64 * CACHE_STEP).collect()
}

/// Recomputes every curve and reference point by quadrature.
pub fn generate_reference_curves() -> ReferenceCurves {
    use rayon::prelude::*;
    let grid = cache_grid();
    let curves = CURVE_FAMILIES
        .iter()
        .map(|&name| Curve {
            name: name.to_string(),
            points: grid.par_iter().map(|&t3| family_point(name, t3)).collect(),
        })
        .collect();
    let points = POINT_FAMILIES
        .iter()
        .map(|&label| {
            let p = point_family(label);
            LabeledPoint {
                label: label.to_string(),
                tau3: p.tau3,
                tau4: p.tau4,
            }
        })
        .collect();
    ReferenceCurves { curves, points }
}

/// Linear interpolation of τ4 at `t3` along a curve sorted by τ3.
fn interpolate(points: &[RatioPoint], t3: f64) -> Option<f64> {
    let i = points.partition_point(|p| p.tau3 < t3);
    if i < points.len() && (points[i].tau3 - t3).abs() < 1e-12 {
        return Some(points[i].tau4);
    }
    if i == 0 || i == points.len() {
        return None;
    }
    let (a, b) = (points[i - 1], points[i]);
    let w = (t3 - a.tau3) / (b.tau3 - a.tau3);
    Some(a.tau4 + w * (b.tau4 - a.tau4))
}

fn grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step + 1e-9).floor() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

/// Diagram data for plotting: the samples verbatim, family curves
/// resampled onto multiples of `grid_step`, reference points and bounds.
pub fn ratio_diagram_data(
    samples: &[(String, LMoments)],
    grid_step: f64,
) -> Result<RatioDiagramDataset, String> {
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(format!("grid_step must lie in (0, 0.5], got {grid_step}"));
    }
    let cache = reference_curves();
    let curve_grid = grid(grid_step, CURVE_TAU3_MAX);
    let curves = cache
        .curves
        .iter()
        .map(|c| {
            let mut sorted = c.points.clone();
            sorted.sort_by(|a, b| a.tau3.total_cmp(&b.tau3));
            Curve {
                name: c.name.clone(),
                points: curve_grid
                    .iter()
                    .filter_map(|&t3| interpolate(&sorted, t3).map(|tau4| RatioPoint { tau3: t3, tau4 }))
                    .collect(),
            }
        })
        .collect();
    let bound_grid = grid(grid_step, 1.0);
    let bounds = vec![
        Curve {
            name: "GLO".into(),
            points: bound_grid
                .iter()
                .map(|&t| RatioPoint {
                    tau3: t,
                    tau4: glo_tau4(t),
                })
                .collect(),
        },
        Curve {
            name: "LIMIT".into(),
            points: bound_grid
                .iter()
                .map(|&t| RatioPoint {
                    tau3: t,
                    tau4: tau4_lower_limit(t),
                })
                .collect(),
        },
    ];
    let sample_points = samples
        .iter()
        .map(|(label, lm)| LabeledPoint {
            label: label.clone(),
            tau3: lm.tau3,
            tau4: lm.tau4,
        })
        .collect();
    Ok(RatioDiagramDataset {
        sample_points,
        curves,
        reference_points: cache.points,
        bounds,
    })
}

impl RatioDiagramDataset {
    /// `series,label,tau3,tau4` rows for every element of the diagram.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,label,tau3,tau4\n");
        for p in &self.sample_points {
            let _ = writeln!(out, "sample,{},{},{}", csv_field(&p.label), p.tau3, p.tau4);
        }
        for c in &self.curves {
            for p in &c.points {
                let _ = writeln!(out, "curve,{},{},{}", c.name, p.tau3, p.tau4);
            }
        }
        for p in &self.reference_points {
            let _ = writeln!(out, "point,{},{},{}", p.label, p.tau3, p.tau4);
        }
        for c in &self.bounds {
            for p in &c.points {
                let _ = writeln!(out, "bound,{},{},{}", c.name, p.tau3, p.tau4);
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(ds: &RatioDiagramDataset, label: &str) -> (f64, f64) {
        let p = ds.reference_points.iter().find(|p| p.label == label).unwrap();
        (p.tau3, p.tau4)
    }

    #[test]
    fn empty_overlay_has_curves_and_bounds() {
        let ds = ratio_diagram_data(&[], 0.05).unwrap();
        assert!(ds.sample_points.is_empty());
        assert_eq!(ds.curves.len(), 5);
        assert_eq!(ds.bounds.len(), 2);
        assert_eq!(ds.reference_points.len(), 5);
        assert!(ratio_diagram_data(&[], 0.0).is_err());
        assert!(ratio_diagram_data(&[], 0.6).is_err());
    }

    #[test]
    fn sample_passes_through() {
        let lm = LMoments {
            lambda1: 1.0,
            lambda2: 1.0,
            tau3: 0.2,
            tau4: 0.3,
            n: 10,
        };
        let ds = ratio_diagram_data(&[("v1".into(), lm)], 0.1).unwrap();
        assert_eq!(ds.sample_points[0].tau3, 0.2);
        assert_eq!(ds.sample_points[0].tau4, 0.3);
        assert!(ds.to_csv().contains("sample,v1,0.2,0.3\n"));
    }

    #[test]
    fn pe3_at_zero_skew_is_normal() {
        let ds = ratio_diagram_data(&[], 0.1).unwrap();
        let pe3 = ds.curves.iter().find(|c| c.name == "PE3").unwrap();
        let mid = pe3.points.iter().find(|p| p.tau3.abs() < 1e-12).unwrap();
        assert!((mid.tau4 - 0.1226).abs() < 5e-5, "{}", mid.tau4);
    }

    #[test]
    fn reference_points_match_closed_forms() {
        let ds = ratio_diagram_data(&[], 0.1).unwrap();
        let (t3, t4) = point(&ds, "EXP");
        assert!((t3 - 1.0 / 3.0).abs() < 1e-10 && (t4 - 1.0 / 6.0).abs() < 1e-10);
        let (t3, t4) = point(&ds, "UNI");
        assert!(t3.abs() < 1e-10 && t4.abs() < 1e-10);
        // Gumbel: τ3 = ln(9/8)/ln 2, τ4 = (16 ln 2 - 10 ln 3)/ln 2
        let (t3, t4) = point(&ds, "GUM");
        assert!((t3 - (9.0f64 / 8.0).ln() / 2f64.ln()).abs() < 1e-10);
        let ln2 = 2f64.ln();
        assert!((t4 - (16.0 * ln2 - 10.0 * 3f64.ln()) / ln2).abs() < 1e-10);
        // normal τ4 = 30 π⁻¹ arctan √2 - 9
        let (t3, t4) = point(&ds, "NOR");
        assert!(t3.abs() < 1e-10);
        assert!((t4 - (30.0 / std::f64::consts::PI * 2f64.sqrt().atan() - 9.0)).abs() < 1e-10);
    }

    #[test]
    fn curves_respect_lower_bound_and_glo_is_its_own_bound() {
        let ds = ratio_diagram_data(&[], 0.01).unwrap();
        for c in &ds.curves {
            assert!(c.points.len() > 150, "{}", c.name);
            for p in &c.points {
                assert!(p.tau4 >= tau4_lower_limit(p.tau3), "{} {:?}", c.name, p);
            }
        }
        let glo = ds.curves.iter().find(|c| c.name == "GLO").unwrap();
        for p in &glo.points {
            assert!((p.tau4 - glo_tau4(p.tau3)).abs() < 1e-9);
        }
    }

    #[test]
    fn generalized_pareto_curve_matches_closed_form() {
        // τ4 = (1-κ)(2-κ) / ((3+κ)(4+κ)) at κ = (1 - 3τ3)/(1 + τ3)
        let ds = ratio_diagram_data(&[], 0.05).unwrap();
        let gpa = ds.curves.iter().find(|c| c.name == "GPA").unwrap();
        for p in &gpa.points {
            let k = (1.0 - 3.0 * p.tau3) / (1.0 + p.tau3);
            let t4 = (1.0 - k) * (2.0 - k) / ((3.0 + k) * (4.0 + k));
            assert!((p.tau4 - t4).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn csv_roundtrip_of_cache() {
        let cache = reference_curves();
        let again = ReferenceCurves::from_csv(&cache.to_csv()).unwrap();
        assert_eq!(cache, again);
    }
}
