//! Coefficient selection, rotation-invariant and complex feature vectors,
//! and per-dimension standard scaling.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bases::KernelIndex;
use crate::error::{Error, Result};
use crate::transform::CoefficientTable;

/// Admission predicate family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// `n + |m| <= C`.
    Pyramidal,
    /// `n <= C`, `|m| <= n`, `n - |m|` even.
    RadialWithParity,
    /// `n <= C`, `|m| <= n`.
    Radial,
    /// `2|n| + |l| <= C`.
    PcetWeighted,
}

impl RuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::Pyramidal => "pyramidal",
            RuleKind::RadialWithParity => "radial_with_parity",
            RuleKind::Radial => "radial",
            RuleKind::PcetWeighted => "pcet_weighted",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    /// Accepts the canonical names and the short family aliases
    /// `zm`, `pzm` and `pcet`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pyramidal" => Ok(RuleKind::Pyramidal),
            "radial_with_parity" | "zm" => Ok(RuleKind::RadialWithParity),
            "radial" | "pzm" => Ok(RuleKind::Radial),
            "pcet_weighted" | "pcet" => Ok(RuleKind::PcetWeighted),
            other => Err(Error::InvalidArgument(format!("unknown selection rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionRule {
    pub kind: RuleKind,
    pub c: u32,
}

impl SelectionRule {
    pub fn new(kind: RuleKind, c: u32) -> Self {
        SelectionRule { kind, c }
    }

    /// Whether radial index `n` and angular index `m` are admitted.
    /// `n` is signed because PCET radial orders may be negative.
    pub fn admits(&self, n: i64, m: i64) -> bool {
        let c = self.c as i64;
        let am = m.abs();
        match self.kind {
            RuleKind::Pyramidal => n >= 0 && n + am <= c,
            RuleKind::RadialWithParity => n >= 0 && n <= c && am <= n && (n - am) % 2 == 0,
            RuleKind::Radial => n >= 0 && n <= c && am <= n,
            RuleKind::PcetWeighted => 2 * n.abs() + am <= c,
        }
    }

    /// Number of admitted `(n, m)` pairs over unbounded index ranges
    /// (non-negative `n`, except signed `n` for the PCET rule).
    pub fn closed_form_count(&self) -> usize {
        let c = self.c as usize;
        match self.kind {
            RuleKind::Pyramidal | RuleKind::Radial => (c + 1) * (c + 1),
            RuleKind::RadialWithParity => (c + 1) * (c + 2) / 2,
            RuleKind::PcetWeighted => {
                // Each |n| <= C/2 admits 2(C - 2|n|) + 1 angular indices.
                let h = c / 2;
                (2 * c + 1) + 2 * (1..=h).map(|n| 2 * (c - 2 * n) + 1).sum::<usize>()
            }
        }
    }

    /// Every admitted pair in canonical order (ascending `n`, then `m`).
    pub fn enumerate(&self) -> Vec<(i64, i64)> {
        let c = self.c as i64;
        let n_lo = if self.kind == RuleKind::PcetWeighted { -c } else { 0 };
        let mut out = Vec::new();
        for n in n_lo..=c {
            for m in -c..=c {
                if self.admits(n, m) {
                    out.push((n, m));
                }
            }
        }
        out
    }
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} C={}", self.kind, self.c)
    }
}

/// Largest `C` whose selection count does not exceed `target`, or `None`
/// when even `C = 0` selects too many.
pub fn largest_c_for_target(kind: RuleKind, target: usize) -> Option<u32> {
    let count = |c: u32| SelectionRule::new(kind, c).closed_form_count();
    if count(0) > target {
        return None;
    }
    let mut c = 0u32;
    while count(c + 1) <= target {
        c += 1;
    }
    Some(c)
}

/// Options for [`select`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SelectOptions {
    /// Include the self-conjugate Nyquist mode `m = -N_theta/2`.
    pub include_nyquist: bool,
}

/// Picks the coefficients admitted by `rule`, ascending `n` then `m`.
pub fn select(
    coeffs: &CoefficientTable,
    rule: SelectionRule,
    options: SelectOptions,
) -> Vec<(KernelIndex, Complex64)> {
    if rule.kind != RuleKind::Pyramidal {
        log::warn!(
            "applying the {} rule to polar separable coefficients; pyramidal is the matching rule",
            rule.kind
        );
    }
    let nyquist = coeffs.grid().m_min();
    coeffs
        .iter()
        .filter(|(idx, _)| options.include_nyquist || idx.m != nyquist)
        .filter(|(idx, _)| rule.admits(idx.n as i64, idx.m))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    MagnitudeInvariant,
    ComplexParts,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::MagnitudeInvariant => "magnitude_invariant",
            FeatureKind::ComplexParts => "complex_parts",
        }
    }
}

/// Provenance carried by a [`FeatureVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub kind: FeatureKind,
    pub rule: Option<SelectionRule>,
    /// Human-readable description of the value order.
    pub ordering: String,
}

impl FeatureMeta {
    /// Single-line descriptor suitable for a CSV header comment.
    pub fn descriptor(&self) -> String {
        let rule = match &self.rule {
            Some(r) => format!("rule={} C={}", r.kind, r.c),
            None => "rule=none".to_string(),
        };
        format!("kind={} {} order={}", self.kind.as_str(), rule, self.ordering)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub meta: FeatureMeta,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `F_n(k) = (sum_m |C_{n,m}|^(2k))^(1/(2k))` for `n <= n_max`,
/// `1 <= k <= k_max`, summing over every `m` in the table.
///
/// Values are k-major: all `n` for `k = 1`, then all `n` for `k = 2`, ...
pub fn magnitude_invariants(coeffs: &CoefficientTable, n_max: usize, k_max: u32) -> Result<FeatureVector> {
    if n_max >= coeffs.grid().n_r() {
        return Err(Error::InvalidArgument(format!(
            "n_max {n_max} must be < N_r = {}",
            coeffs.grid().n_r()
        )));
    }
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be >= 1".into()));
    }
    let mut values = Vec::with_capacity((n_max + 1) * k_max as usize);
    for k in 1..=k_max {
        let p = 2.0 * k as f64;
        for n in 0..=n_max {
            let mags: Vec<f64> = coeffs.row(n).iter().map(|c| c.norm()).collect();
            let peak = mags.iter().copied().fold(0.0, f64::max);
            // Scale by the peak so high powers neither overflow nor underflow.
            let value = if peak == 0.0 {
                0.0
            } else {
                let s: f64 = mags.iter().map(|&a| (a / peak).powf(p)).sum();
                peak * s.powf(1.0 / p)
            };
            values.push(value);
        }
    }
    Ok(FeatureVector {
        values,
        meta: FeatureMeta {
            kind: FeatureKind::MagnitudeInvariant,
            rule: None,
            ordering: format!("k=1..{k_max} major, n=0..{n_max} minor"),
        },
    })
}

/// `[re, im]` of each selected coefficient, in selection order.
pub fn complex_parts(selected: &[(KernelIndex, Complex64)], rule: Option<SelectionRule>) -> FeatureVector {
    let values = selected.iter().flat_map(|(_, c)| [c.re, c.im]).collect();
    FeatureVector {
        values,
        meta: FeatureMeta {
            kind: FeatureKind::ComplexParts,
            rule,
            ordering: "n ascending, m ascending, (re, im) pairs".into(),
        },
    }
}

/// Fitted per-dimension mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Floor applied to the fitted standard deviation.
pub const SCALE_FLOOR: f64 = 1e-12;

pub fn standard_scaler_fit(vectors: &[FeatureVector]) -> Result<StandardScaler> {
    if vectors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 vectors to fit a scaler, got {}",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "feature lengths {dim} and {}",
            v.len()
        )));
    }
    let count = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(&v.values) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; dim];
    for v in vectors {
        for ((s, x), m) in var.iter_mut().zip(&v.values).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| (s / count).sqrt().max(SCALE_FLOOR))
        .collect();
    Ok(StandardScaler { mean, scale })
}

pub fn standard_scaler_apply(state: &StandardScaler, v: &FeatureVector) -> Result<FeatureVector> {
    if v.len() != state.mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "scaler fitted on {} dimensions, vector has {}",
            state.mean.len(),
            v.len()
        )));
    }
    let values = v
        .values
        .iter()
        .zip(&state.mean)
        .zip(&state.scale)
        .map(|((x, m), s)| (x - m) / s)
        .collect();
    Ok(FeatureVector {
        values,
        meta: v.meta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar_grid::{build_grid, PolarImage, DEFAULT_R_MAX};
    use crate::transform::{forward, rotate_coefficients, Convention};

    fn brute_count(rule: SelectionRule) -> usize {
        let c = rule.c as i64;
        let mut count = 0;
        for n in -c - 2..=c + 2 {
            for m in -c - 2..=c + 2 {
                if rule.admits(n, m) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn closed_forms_match_enumeration() {
        for kind in [
            RuleKind::Pyramidal,
            RuleKind::RadialWithParity,
            RuleKind::Radial,
            RuleKind::PcetWeighted,
        ] {
            for c in 0..25 {
                let rule = SelectionRule::new(kind, c);
                assert_eq!(rule.closed_form_count(), brute_count(rule), "{rule}");
                assert_eq!(rule.enumerate().len(), brute_count(rule));
            }
        }
    }

    #[test]
    fn reference_table_counts() {
        assert_eq!(SelectionRule::new(RuleKind::RadialWithParity, 12).closed_form_count(), 91);
        assert_eq!(SelectionRule::new(RuleKind::Pyramidal, 8).closed_form_count(), 81);
        assert_eq!(SelectionRule::new(RuleKind::Pyramidal, 0).enumerate(), vec![(0, 0)]);
    }

    fn table(n_r: usize, n_theta: usize, seed: u64) -> CoefficientTable {
        let g = build_grid(n_r, n_theta, DEFAULT_R_MAX).unwrap();
        let mut s = seed | 1;
        let img = PolarImage::from_index_fn(&g, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        });
        forward(&img, Convention::Orthonormal).unwrap()
    }

    #[test]
    fn selection_on_a_table() {
        let t = table(16, 32, 1);
        let one = select(&t, SelectionRule::new(RuleKind::Pyramidal, 0), SelectOptions::default());
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].0, KernelIndex::new(0, 0));

        let sel = select(&t, SelectionRule::new(RuleKind::Pyramidal, 8), SelectOptions::default());
        assert_eq!(sel.len(), 81);
        let fv = complex_parts(&sel, Some(SelectionRule::new(RuleKind::Pyramidal, 8)));
        assert_eq!(fv.len(), 162);
        // ascending n, then m
        assert!(sel.windows(2).all(|w| (w[0].0.n, w[0].0.m) < (w[1].0.n, w[1].0.m)));

        let zm = select(&t, SelectionRule::new(RuleKind::RadialWithParity, 12), SelectOptions::default());
        assert_eq!(zm.len(), 91);
    }

    #[test]
    fn nyquist_is_opt_in() {
        let t = table(4, 4, 2);
        let rule = SelectionRule::new(RuleKind::Pyramidal, 3);
        let without = select(&t, rule, SelectOptions::default());
        let with = select(&t, rule, SelectOptions { include_nyquist: true });
        assert!(without.iter().all(|(i, _)| i.m != -2));
        assert_eq!(with.len(), without.len() + 2);
    }

    #[test]
    fn magnitude_features_of_constant() {
        let g = build_grid(8, 8, DEFAULT_R_MAX).unwrap();
        let t = forward(&PolarImage::from_fn(&g, |_, _| 1.0), Convention::Orthonormal).unwrap();
        let f = magnitude_invariants(&t, 7, 1).unwrap();
        assert!((f.values[0] - 8.0).abs() < 1e-12);
        assert!(f.values[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn magnitude_features_ignore_rotation() {
        let t = table(10, 16, 7);
        let a = magnitude_invariants(&t, 9, 4).unwrap();
        for alpha in [0.1, 1.0, 2.5, -4.0] {
            let b = magnitude_invariants(&rotate_coefficients(&t, alpha), 9, 4).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn power_mean_limits() {
        let t = table(6, 12, 3);
        let f = magnitude_invariants(&t, 5, 8).unwrap();
        for n in 0..6 {
            let norm: f64 = t.row(n).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            assert!((f.values[n] - norm).abs() < 1e-12);
            let peak = t.row(n).iter().map(|c| c.norm()).fold(0.0, f64::max);
            let k8 = f.values[7 * 6 + n];
            // An l^16 norm over 12 entries lies in [peak, 12^(1/16) peak].
            let bound = 12f64.powf(1.0 / 16.0) * peak;
            assert!(k8 >= peak && k8 <= bound * (1.0 + 1e-12), "n={n}: {k8} vs {peak}");
        }
        assert!(magnitude_invariants(&t, 6, 1).is_err());
        assert!(magnitude_invariants(&t, 2, 0).is_err());
    }

    #[test]
    fn complex_parts_layout_and_covariance() {
        let g = build_grid(4, 8, DEFAULT_R_MAX).unwrap();
        let mut t = CoefficientTable::zeros(&g, Convention::Orthonormal);
        t.set(0, 1, Complex64::new(1.0, 0.0));
        t.set(2, 0, Complex64::new(3.0, 0.0));
        let sel = select(&t, SelectionRule::new(RuleKind::Pyramidal, 3), SelectOptions::default());
        let fv = complex_parts(&sel, None);
        assert!(fv.values.iter().skip(1).step_by(2).all(|&v| v == 0.0));

        let rotated = rotate_coefficients(&t, std::f64::consts::FRAC_PI_2);
        let c = rotated.get(0, 1);
        // (1, 0) turned by -90 degrees
        assert!((c - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            values,
            meta: FeatureMeta {
                kind: FeatureKind::ComplexParts,
                rule: None,
                ordering: String::new(),
            },
        }
    }

    #[test]
    fn scaler_examples() {
        let s = standard_scaler_fit(&[fv(vec![0.0]), fv(vec![2.0])]).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert_eq!(s.scale, vec![1.0]);
        assert_eq!(standard_scaler_apply(&s, &fv(vec![2.0])).unwrap().values, vec![1.0]);

        let s = standard_scaler_fit(&[fv(vec![5.0, 1.0]), fv(vec![5.0, 3.0])]).unwrap();
        let out = standard_scaler_apply(&s, &fv(vec![5.0, 3.0])).unwrap();
        assert_eq!(out.values[0], 0.0);

        assert!(standard_scaler_fit(&[fv(vec![1.0])]).is_err());
        assert!(standard_scaler_fit(&[fv(vec![1.0]), fv(vec![1.0, 2.0])]).is_err());
        assert!(standard_scaler_apply(&s, &fv(vec![1.0])).is_err());
    }

    #[test]
    fn scaled_fit_set_has_zero_mean_unit_variance() {
        let data: Vec<FeatureVector> = (0..37)
            .map(|i| {
                let x = i as f64;
                fv(vec![x * 0.3 - 2.0, (x * 1.7).sin() * 40.0, 1e6 + x * x])
            })
            .collect();
        let s = standard_scaler_fit(&data).unwrap();
        let scaled: Vec<FeatureVector> =
            data.iter().map(|v| standard_scaler_apply(&s, v).unwrap()).collect();
        for d in 0..3 {
            let col: Vec<f64> = scaled.iter().map(|v| v.values[d]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn target_to_c() {
        assert_eq!(largest_c_for_target(RuleKind::Pyramidal, 50), Some(6));
        assert_eq!(largest_c_for_target(RuleKind::Pyramidal, 49), Some(6));
        assert_eq!(largest_c_for_target(RuleKind::Pyramidal, 48), Some(5));
        assert_eq!(largest_c_for_target(RuleKind::RadialWithParity, 91), Some(12));
        assert_eq!(largest_c_for_target(RuleKind::Pyramidal, 0), None);
    }
}
