//! Test results and their JSON shape.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::{chi2_sf, normal_sf};
use crate::error::{Error, Result};
use crate::likelihood::InfoKind;

/// Which statistic produced a [`TestResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "RS")]
    Rs,
    #[serde(rename = "Wald")]
    Wald,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "LM")]
    Lm,
    #[serde(rename = "OneSidedScore")]
    OneSidedScore,
    #[serde(rename = "Moment")]
    Moment,
    #[serde(rename = "RS*D")]
    RsStarD,
    #[serde(rename = "W*")]
    WaldStar,
    #[serde(rename = "RS_psi")]
    RsPsi,
    #[serde(rename = "RS*P")]
    RsStarP,
    #[serde(rename = "RS*DP")]
    RsStarDp,
    #[serde(rename = "Pearson")]
    Pearson,
    #[serde(rename = "JB")]
    JarqueBera,
    #[serde(rename = "RS_skew")]
    Skewness,
    #[serde(rename = "RS*D_skew")]
    SkewnessRobust,
    #[serde(rename = "BP")]
    BreuschPagan,
    #[serde(rename = "Koenker")]
    Koenker,
    #[serde(rename = "SAR_RS_psi")]
    SpatialPsi,
    #[serde(rename = "SAR_RS*_psi")]
    SpatialPsiStar,
    #[serde(rename = "SAR_RS_phi")]
    SpatialPhi,
    #[serde(rename = "SAR_RS*_phi")]
    SpatialPhiStar,
    #[serde(rename = "SAR_RS_psiphi")]
    SpatialJoint,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Reuse the serde names so table and JSON agree.
        let s = serde_plain_name(*self);
        f.write_str(s)
    }
}

fn serde_plain_name(v: Variant) -> &'static str {
    match v {
        Variant::Rs => "RS",
        Variant::Wald => "Wald",
        Variant::Lr => "LR",
        Variant::Lm => "LM",
        Variant::OneSidedScore => "OneSidedScore",
        Variant::Moment => "Moment",
        Variant::RsStarD => "RS*D",
        Variant::WaldStar => "W*",
        Variant::RsPsi => "RS_psi",
        Variant::RsStarP => "RS*P",
        Variant::RsStarDp => "RS*DP",
        Variant::Pearson => "Pearson",
        Variant::JarqueBera => "JB",
        Variant::Skewness => "RS_skew",
        Variant::SkewnessRobust => "RS*D_skew",
        Variant::BreuschPagan => "BP",
        Variant::Koenker => "Koenker",
        Variant::SpatialPsi => "SAR_RS_psi",
        Variant::SpatialPsiStar => "SAR_RS*_psi",
        Variant::SpatialPhi => "SAR_RS_phi",
        Variant::SpatialPhiStar => "SAR_RS*_phi",
        Variant::SpatialJoint => "SAR_RS_psiphi",
    }
}

/// Statistic, reference distribution and diagnostics of one test.
///
/// `df` is `None` only for one-sided z statistics, whose p-value is the
/// standard normal upper tail. Extra numeric diagnostics (condition numbers,
/// identity residuals) are flattened into the JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub variant: Variant,
    pub statistic: f64,
    pub df: Option<usize>,
    pub p_value: f64,
    pub info_kind: Option<InfoKind>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(flatten)]
    pub diagnostics: BTreeMap<String, f64>,
}

/// Round-off allowance below zero for quadratic-form statistics.
const NEG_ROUNDOFF: f64 = 1e-8;

impl TestResult {
    /// Quadratic-form statistic referred to chi-squared with `df` degrees of freedom.
    pub fn chi2(variant: Variant, statistic: f64, df: usize) -> Result<Self> {
        if !statistic.is_finite() {
            return Err(Error::Numeric(format!("{variant} statistic is {statistic}")));
        }
        if statistic < -NEG_ROUNDOFF * statistic.abs().max(1.0) {
            return Err(Error::Numeric(format!("{variant} statistic {statistic:.3e} is negative")));
        }
        let statistic = statistic.max(0.0);
        Ok(TestResult {
            variant,
            statistic,
            df: Some(df),
            p_value: chi2_sf(statistic, df)?,
            info_kind: None,
            notes: Vec::new(),
            diagnostics: BTreeMap::new(),
        })
    }

    /// Signed z statistic with upper-tail normal p-value.
    pub fn one_sided(variant: Variant, z: f64) -> Result<Self> {
        if !z.is_finite() {
            return Err(Error::Numeric(format!("{variant} statistic is {z}")));
        }
        Ok(TestResult {
            variant,
            statistic: z,
            df: None,
            p_value: normal_sf(z),
            info_kind: None,
            notes: Vec::new(),
            diagnostics: BTreeMap::new(),
        })
    }

    pub fn with_info(mut self, kind: InfoKind) -> Self {
        self.info_kind = Some(kind);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn with_notes(mut self, notes: impl IntoIterator<Item = String>) -> Self {
        self.notes.extend(notes);
        self
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_result_p_value() {
        let r = TestResult::chi2(Variant::Rs, 3.841459, 1).unwrap();
        assert!((r.p_value - 0.05).abs() < 1e-5);
        assert_eq!(r.df, Some(1));
    }

    #[test]
    fn tiny_negative_is_clamped_large_negative_rejected() {
        assert_eq!(TestResult::chi2(Variant::Lr, -1e-12, 1).unwrap().statistic, 0.0);
        assert!(TestResult::chi2(Variant::Lr, -1e-3, 1).is_err());
    }

    #[test]
    fn one_sided_zero_has_half_p() {
        let r = TestResult::one_sided(Variant::OneSidedScore, 0.0).unwrap();
        assert_eq!(r.p_value, 0.5);
        assert_eq!(r.df, None);
    }
}
