use crate::error::{Error, Result};
use crate::simulate::Panel;

/// Group identifiers that can be partialled out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupColumn {
    Cohort,
    Region,
}

impl GroupColumn {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupColumn::Cohort => "cohort",
            GroupColumn::Region => "region",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cohort" => Some(GroupColumn::Cohort),
            "region" => Some(GroupColumn::Region),
            _ => None,
        }
    }
}

/// Fixed effects removed by within-group demeaning before any ratio or
/// regression. With no columns only the overall mean is removed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CovariateSpec {
    pub columns: Vec<GroupColumn>,
}

impl CovariateSpec {
    pub fn none() -> Self {
        Self { columns: Vec::new() }
    }

    pub fn groups() -> Self {
        Self { columns: vec![GroupColumn::Cohort, GroupColumn::Region] }
    }
}

/// Group codes resolved against a panel.
#[derive(Debug, Clone)]
pub(crate) struct Factors<'a> {
    codes: Vec<&'a [u32]>,
    levels: Vec<usize>,
}

impl<'a> Factors<'a> {
    pub(crate) fn empty() -> Self {
        Self { codes: Vec::new(), levels: Vec::new() }
    }

    pub(crate) fn resolve(panel: &'a Panel, spec: &CovariateSpec) -> Result<Self> {
        let mut codes = Vec::new();
        for col in &spec.columns {
            let c = match col {
                GroupColumn::Cohort => panel.cohort(),
                GroupColumn::Region => panel.region(),
            }
            .ok_or_else(|| Error::InvalidInput(format!("panel has no {} column", col.as_str())))?;
            codes.push(c);
        }
        let levels = codes.iter().map(|c| c.iter().max().map_or(0, |m| *m as usize + 1)).collect();
        Ok(Self { codes, levels })
    }

    /// Degrees of freedom used by the intercept and the fixed effects,
    /// assuming connected groups.
    pub(crate) fn absorbed(&self, weights: &[f64]) -> usize {
        if self.codes.is_empty() {
            return 1;
        }
        let mut total = 0;
        for (codes, &levels) in self.codes.iter().zip(&self.levels) {
            let mut present = vec![false; levels];
            for (c, w) in codes.iter().zip(weights) {
                if *w > 0.0 {
                    present[*c as usize] = true;
                }
            }
            total += present.iter().filter(|p| **p).count();
        }
        total + 1 - self.codes.len()
    }

    /// Weighted within transformation. One factor is exact in a single
    /// pass; several factors use alternating projections.
    pub(crate) fn demean(&self, x: &[f64], weights: &[f64]) -> Vec<f64> {
        let mut r = x.to_vec();
        if self.codes.is_empty() {
            let (mut sw, mut swx) = (0.0, 0.0);
            for (xi, wi) in x.iter().zip(weights) {
                sw += wi;
                swx += wi * xi;
            }
            let m = if sw > 0.0 { swx / sw } else { 0.0 };
            r.iter_mut().for_each(|v| *v -= m);
            return r;
        }
        let scale = 1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut sums = Vec::new();
        let mut mass = Vec::new();
        for _ in 0..1000 {
            let mut change = 0.0f64;
            for (codes, &levels) in self.codes.iter().zip(&self.levels) {
                sums.clear();
                sums.resize(levels, 0.0);
                mass.clear();
                mass.resize(levels, 0.0);
                for ((c, v), w) in codes.iter().zip(&r).zip(weights) {
                    sums[*c as usize] += w * v;
                    mass[*c as usize] += w;
                }
                for (s, m) in sums.iter_mut().zip(&mass) {
                    *s = if *m > 0.0 { *s / m } else { 0.0 };
                    change = change.max(s.abs());
                }
                for (c, v) in codes.iter().zip(r.iter_mut()) {
                    *v -= sums[*c as usize];
                }
            }
            if self.codes.len() == 1 || change < 1e-13 * scale {
                break;
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_factor_removes_group_means() {
        let codes = vec![0u32, 0, 1, 1, 1];
        let f = Factors { codes: vec![&codes], levels: vec![2] };
        let x = [1.0, 3.0, 2.0, 4.0, 6.0];
        let r = f.demean(&x, &[1.0; 5]);
        assert_eq!(r, vec![-1.0, 1.0, -2.0, 0.0, 2.0]);
        assert_eq!(f.absorbed(&[1.0; 5]), 2);
    }

    #[test]
    fn two_factors_remove_additive_effects() {
        let a: Vec<u32> = (0..60).map(|i| i % 3).collect();
        let b: Vec<u32> = (0..60).map(|i| (i / 3) % 4).collect();
        let f = Factors { codes: vec![&a, &b], levels: vec![3, 4] };
        let x: Vec<f64> = (0..60).map(|i| 0.5 * a[i] as f64 - 1.5 * b[i] as f64 + 7.0).collect();
        let r = f.demean(&x, &[1.0; 60]);
        assert!(r.iter().all(|v| v.abs() < 1e-10));
        assert_eq!(f.absorbed(&[1.0; 60]), 6);
    }

    #[test]
    fn weights_count_duplicates() {
        let x = [1.0, 2.0, 4.0];
        let r = Factors::empty().demean(&x, &[2.0, 0.0, 1.0]);
        // weighted mean 2.0
        assert_eq!(r, vec![-1.0, 0.0, 2.0]);
    }
}
