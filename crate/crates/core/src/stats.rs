//! Rank-based k-group comparison: Kruskal–Wallis H with tie correction and
//! Dunn's pairwise post-hoc test with Bonferroni adjustment.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0:?} is empty")]
    EmptyGroup(String),
    #[error("group {0:?} contains a non-finite value")]
    NonFinite(String),
    #[error("all observations are tied; the statistic is undefined")]
    Degenerate,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub values: Vec<f64>,
}

impl Group {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Group {
            name: name.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: String,
    pub b: String,
    /// Positive when `a` has the larger mean rank.
    pub z: f64,
    pub p: f64,
    pub p_adjusted: f64,
}

/// Upper tail `Q(df/2, x/2)` of the chi-square distribution.
pub fn chi2_upper_tail(x: f64, df: usize) -> Result<f64> {
    if df == 0 || x.is_nan() || x < 0.0 {
        return Err(StatsError::InvalidArgument(format!(
            "chi2_upper_tail(x = {x}, df = {df})"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, x / 2.0))
}

fn validate(groups: &[Group]) -> Result<()> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for g in groups {
        if g.values.is_empty() {
            return Err(StatsError::EmptyGroup(g.name.clone()));
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(g.name.clone()));
        }
    }
    Ok(())
}

struct Ranked {
    /// Rank sum per group.
    sums: Vec<f64>,
    sizes: Vec<usize>,
    n: usize,
    /// `Σ (t³ − t)` over tie blocks.
    ties: f64,
}

/// Mid-ranks of the pooled observations (1-based).
fn rank(groups: &[Group]) -> Ranked {
    let mut pooled: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| grp.values.iter().map(move |&v| (v, g)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let mut sums = vec![0.0; groups.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &(_, g) in &pooled[i..=j] {
            sums[g] += mid;
        }
        ties += t * t * t - t;
        i = j + 1;
    }
    Ranked {
        sums,
        sizes: groups.iter().map(|g| g.values.len()).collect(),
        n,
        ties,
    }
}

pub fn kruskal_wallis(groups: &[Group]) -> Result<KruskalWallis> {
    validate(groups)?;
    let r = rank(groups);
    let n = r.n as f64;
    let correction = 1.0 - r.ties / (n * n * n - n);
    if correction <= 0.0 {
        return Err(StatsError::Degenerate);
    }
    // Over a common denominator, so integer rank sums give a correctly
    // rounded statistic.
    let sq: f64 = r.sums.iter().zip(&r.sizes).map(|(s, &k)| s * s / k as f64).sum();
    let raw = (12.0 * sq - 3.0 * n * (n + 1.0) * (n + 1.0)) / (n * (n + 1.0));
    let h = (raw / correction).max(0.0);
    let df = groups.len() - 1;
    Ok(KruskalWallis {
        h,
        df,
        p: chi2_upper_tail(h, df)?,
    })
}

/// Dunn's z on mean ranks for every pair (in group order), two-sided, with
/// Bonferroni adjustment over `k(k−1)/2` comparisons capped at 1.
pub fn dunn_pairwise(groups: &[Group]) -> Result<Vec<PairwiseComparison>> {
    validate(groups)?;
    let r = rank(groups);
    let n = r.n as f64;
    let variance = n * (n + 1.0) / 12.0 - r.ties / (12.0 * (n - 1.0));
    if variance <= 0.0 || r.ties >= n * n * n - n {
        return Err(StatsError::Degenerate);
    }
    let k = groups.len();
    let m = (k * (k - 1) / 2) as f64;
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let (na, nb) = (r.sizes[a] as f64, r.sizes[b] as f64);
            let diff = r.sums[a] / na - r.sums[b] / nb;
            let z = diff / (variance * (1.0 / na + 1.0 / nb)).sqrt();
            let p = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
            out.push(PairwiseComparison {
                a: groups[a].name.clone(),
                b: groups[b].name.clone(),
                z,
                p,
                p_adjusted: (p * m).min(1.0),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    fn groups(v: &[&[f64]]) -> Vec<Group> {
        v.iter()
            .enumerate()
            .map(|(i, g)| Group::new(format!("g{i}"), g.to_vec()))
            .collect()
    }

    #[test]
    fn hand_rank_sums() {
        let kw = kruskal_wallis(&groups(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]])).unwrap();
        assert_eq!(kw.h, 7.2);
        assert_eq!(kw.df, 2);
        assert!((kw.p - (-3.6f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn tie_corrected_by_hand() {
        // Pooled: 1 1 2 | 2 3 3 → ranks 1.5 1.5 3.5 | 3.5 5.5 5.5.
        // R = 6.5, 14.5; raw H = 12/42·(6.5²/3 + 14.5²/3) − 21 = 1.5238…;
        // ties Σ(t³−t) = 18, correction = 1 − 18/210.
        let kw = kruskal_wallis(&groups(&[&[1.0, 1.0, 2.0], &[2.0, 3.0, 3.0]])).unwrap();
        let raw = 12.0 / 42.0 * (6.5 * 6.5 / 3.0 + 14.5 * 14.5 / 3.0) - 21.0;
        assert!((kw.h - raw / (1.0 - 18.0 / 210.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_groups() {
        let g = groups(&[&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]]);
        let kw = kruskal_wallis(&g).unwrap();
        assert!(kw.h.abs() < 1e-12);
        assert!((kw.p - 1.0).abs() < 1e-9);
        assert_eq!(dunn_pairwise(&g).unwrap()[0].p_adjusted, 1.0);
    }

    #[test]
    fn degenerate_and_invalid() {
        assert_eq!(
            kruskal_wallis(&groups(&[&[2.0, 2.0], &[2.0]])),
            Err(StatsError::Degenerate)
        );
        assert_eq!(
            dunn_pairwise(&groups(&[&[2.0, 2.0], &[2.0]])),
            Err(StatsError::Degenerate)
        );
        assert_eq!(kruskal_wallis(&groups(&[&[1.0]])), Err(StatsError::TooFewGroups(1)));
        assert!(matches!(
            kruskal_wallis(&groups(&[&[1.0], &[]])),
            Err(StatsError::EmptyGroup(_))
        ));
        assert!(matches!(
            kruskal_wallis(&groups(&[&[1.0], &[f64::NAN]])),
            Err(StatsError::NonFinite(_))
        ));
        assert!(chi2_upper_tail(-1.0, 2).is_err());
        assert!(chi2_upper_tail(1.0, 0).is_err());
    }

    #[test]
    fn chi2_closed_forms() {
        assert_eq!(chi2_upper_tail(0.0, 3).unwrap(), 1.0);
        for x in [0.1, 1.0, 7.2, 20.0, 60.0] {
            assert!((chi2_upper_tail(x, 2).unwrap() - (-x / 2.0).exp()).abs() < 1e-10);
            // df = 1: erfc(sqrt(x/2)); df = 4: e^{-x/2}(1 + x/2).
            assert!((chi2_upper_tail(x, 1).unwrap() - erfc((x / 2.0).sqrt())).abs() < 1e-10);
            assert!((chi2_upper_tail(x, 4).unwrap() - (-x / 2.0).exp() * (1.0 + x / 2.0)).abs() < 1e-10);
        }
        assert!(chi2_upper_tail(1e4, 5).unwrap() < 1e-300);
        assert_eq!(chi2_upper_tail(f64::INFINITY, 5).unwrap(), 0.0);
    }

    #[test]
    fn shifted_group_detected() {
        let mut rng = Rng::seeded(8);
        let mut g: Vec<Group> = (0..3)
            .map(|i| Group::new(format!("g{i}"), (0..30).map(|_| rng.normal()).collect()))
            .collect();
        for v in &mut g[2].values {
            *v += 100.0;
        }
        let d = dunn_pairwise(&g).unwrap();
        assert!(d[0].p_adjusted > 0.5);
        assert!(d[1].p_adjusted < 0.01 && d[2].p_adjusted < 0.01);
        for c in &d {
            assert!(c.p_adjusted >= c.p && c.p_adjusted <= 1.0);
        }
    }

    fn arb_groups() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 1..12), 2..5)
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(gs in arb_groups()) {
            let g: Vec<Group> = gs.iter().enumerate().map(|(i, v)| Group::new(i.to_string(), v.clone())).collect();
            let t: Vec<Group> = g.iter().map(|x| Group::new(x.name.clone(), x.values.iter().map(|v| (v / 50.0).exp() * 3.0 - 1.0).collect())).collect();
            match (kruskal_wallis(&g), kruskal_wallis(&t)) {
                (Ok(a), Ok(b)) => prop_assert!((a.h - b.h).abs() < 1e-9),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }

        #[test]
        fn group_order_invariance(gs in arb_groups()) {
            let g: Vec<Group> = gs.iter().enumerate().map(|(i, v)| Group::new(i.to_string(), v.clone())).collect();
            let mut rev = g.clone();
            rev.reverse();
            if let (Ok(a), Ok(b)) = (kruskal_wallis(&g), kruskal_wallis(&rev)) {
                prop_assert!((a.h - b.h).abs() < 1e-9);
                let da = dunn_pairwise(&g).unwrap();
                let db = dunn_pairwise(&rev).unwrap();
                for c in &da {
                    let m = db.iter().find(|d| d.a == c.b && d.b == c.a).unwrap();
                    prop_assert!((c.z + m.z).abs() < 1e-9);
                    prop_assert!((c.p_adjusted - m.p_adjusted).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn chi2_decreasing(x in 0.0f64..80.0, dx in 0.001f64..10.0, df in 1usize..20) {
            prop_assert!(chi2_upper_tail(x + dx, df).unwrap() <= chi2_upper_tail(x, df).unwrap());
        }
    }
}
