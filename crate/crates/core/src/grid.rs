//! The discrete rate grid and probability mass functions over it.
//!
//! All inference runs over integer rates in `[b_min, b_max]` Mbps. A [`Pmf`]
//! is the currency passed between the factor graph, the belief filter and the
//! estimators.

use serde::{Deserialize, Serialize};

use crate::error::{PabError, Result};

/// Tolerance for the "sums to one" invariant on a [`Pmf`].
pub const PMF_SUM_TOL: f64 = 1e-9;

/// Inclusive integer rate grid `[b_min, b_max]` in Mbps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateGrid {
    pub b_min: u32,
    pub b_max: u32,
}

impl RateGrid {
    pub fn new(b_min: u32, b_max: u32) -> Result<Self> {
        if b_min < 1 || b_max <= b_min {
            return Err(PabError::Config(format!(
                "rate grid requires 1 <= b_min < b_max, got [{b_min},{b_max}]"
            )));
        }
        Ok(Self { b_min, b_max })
    }

    /// Number of grid points, `B = b_max - b_min + 1`.
    pub fn len(&self) -> usize {
        (self.b_max - self.b_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Rate at grid index `i`.
    pub fn rate(&self, i: usize) -> u32 {
        self.b_min + i as u32
    }

    /// Grid index of an integer rate, if it lies on the grid.
    pub fn index(&self, rate: u32) -> Option<usize> {
        (rate >= self.b_min && rate <= self.b_max).then(|| (rate - self.b_min) as usize)
    }

    pub fn rates(&self) -> impl Iterator<Item = u32> + '_ {
        self.b_min..=self.b_max
    }
}

/// Discrete probability mass function over a [`RateGrid`].
///
/// Invariants: values are non-negative and sum to one within [`PMF_SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    grid: RateGrid,
    values: Vec<f64>,
}

impl Pmf {
    /// Builds a Pmf from raw non-negative mass, normalizing to sum one.
    pub fn from_mass(grid: RateGrid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.len() {
            return Err(PabError::Config(format!(
                "mass vector length {} does not match grid size {}",
                mass.len(),
                grid.len()
            )));
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) || mass.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PabError::Config(
                "mass vector must be non-negative, finite and not identically zero".into(),
            ));
        }
        let values = mass.into_iter().map(|v| v / total).collect();
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: RateGrid) -> Self {
        let b = grid.len();
        Self {
            grid,
            values: vec![1.0 / b as f64; b],
        }
    }

    /// Point mass at an integer rate on the grid.
    pub fn point_mass(grid: RateGrid, rate: u32) -> Result<Self> {
        let idx = grid
            .index(rate)
            .ok_or_else(|| PabError::Config(format!("rate {rate} off grid")))?;
        let mut values = vec![0.0; grid.len()];
        values[idx] = 1.0;
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> RateGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mass at an integer rate (zero off grid).
    pub fn mass_at(&self, rate: u32) -> f64 {
        self.grid.index(rate).map_or(0.0, |i| self.values[i])
    }

    /// Survival function `S(r) = Pr(X >= r)` evaluated at every grid rate,
    /// with one extra trailing entry `S(b_max + 1) = 0`.
    pub fn survival(&self) -> Vec<f64> {
        let b = self.values.len();
        let mut s = vec![0.0; b + 1];
        for i in (0..b).rev() {
            s[i] = s[i + 1] + self.values[i];
        }
        s
    }

    /// Distribution of the minimum of independent variables.
    ///
    /// Computed through survival functions: `S_min(r)` is the product of the
    /// inputs' survival functions, and the mass at `r` is
    /// `S_min(r) - S_min(r + 1)`.
    pub fn min_pmf(pmfs: &[&Pmf]) -> Result<Pmf> {
        let first = pmfs
            .first()
            .ok_or_else(|| PabError::Config("min_pmf needs at least one input".into()))?;
        let grid = first.grid;
        let b = grid.len();
        let mut s_prod = vec![1.0; b + 1];
        s_prod[b] = if pmfs.is_empty() { 1.0 } else { 0.0 };
        for p in pmfs {
            if p.grid != grid {
                return Err(PabError::GridMismatch {
                    expected_lo: grid.b_min,
                    expected_hi: grid.b_max,
                    got_lo: p.grid.b_min,
                    got_hi: p.grid.b_max,
                });
            }
            let s = p.survival();
            for (acc, v) in s_prod.iter_mut().zip(&s) {
                *acc *= v;
            }
        }
        let mass: Vec<f64> = (0..b).map(|i| (s_prod[i] - s_prod[i + 1]).max(0.0)).collect();
        Pmf::from_mass(grid, mass)
    }

    /// Checks the Pmf invariants, returning the normalization defect.
    pub fn check(&self) -> Result<()> {
        let total: f64 = self.values.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(PabError::Config(format!(
                "pmf sums to {total}, expected 1"
            )));
        }
        if self.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(PabError::Config("pmf has negative or non-finite mass".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid10() -> RateGrid {
        RateGrid::new(1, 10).unwrap()
    }

    #[test]
    fn grid_indexing_roundtrip() {
        let g = RateGrid::new(1, 100).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.index(1), Some(0));
        assert_eq!(g.index(100), Some(99));
        assert_eq!(g.index(0), None);
        assert_eq!(g.index(101), None);
        assert_eq!(g.rate(49), 50);
    }

    #[test]
    fn rejects_degenerate_grid() {
        assert!(RateGrid::new(5, 5).is_err());
        assert!(RateGrid::new(0, 10).is_err());
    }

    #[test]
    fn from_mass_normalizes() {
        let p = Pmf::from_mass(grid10(), vec![1.0; 10]).unwrap();
        p.check().unwrap();
        assert!((p.mass_at(3) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_or_negative_mass() {
        assert!(Pmf::from_mass(grid10(), vec![0.0; 10]).is_err());
        let mut m = vec![1.0; 10];
        m[4] = -0.5;
        assert!(Pmf::from_mass(grid10(), m).is_err());
    }

    #[test]
    fn survival_is_decreasing_with_zero_tail() {
        let p = Pmf::uniform(grid10());
        let s = p.survival();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert_eq!(s[10], 0.0);
        for w in s.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn min_of_point_masses_is_point_mass_at_min() {
        let g = RateGrid::new(1, 60).unwrap();
        let a = Pmf::point_mass(g, 30).unwrap();
        let b = Pmf::point_mass(g, 50).unwrap();
        let m = Pmf::min_pmf(&[&a, &b]).unwrap();
        assert!((m.mass_at(30) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_of_two_uniform_on_two_points() {
        // Enumerating the four equiprobable outcomes of two uniforms on {1,2}
        // gives min=1 with probability 3/4 and min=2 with probability 1/4.
        let g = RateGrid::new(1, 2).unwrap();
        let u = Pmf::uniform(g);
        let m = Pmf::min_pmf(&[&u, &u]).unwrap();
        assert!((m.mass_at(1) - 0.75).abs() < 1e-12);
        assert!((m.mass_at(2) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn min_of_single_input_is_identity() {
        let p = Pmf::from_mass(grid10(), vec![1., 2., 3., 4., 0., 0., 1., 1., 1., 2.]).unwrap();
        let m = Pmf::min_pmf(&[&p]).unwrap();
        for r in 1..=10 {
            assert!((m.mass_at(r) - p.mass_at(r)).abs() < 1e-12);
        }
    }

    #[test]
    fn min_pmf_grid_mismatch_errors() {
        let a = Pmf::uniform(grid10());
        let b = Pmf::uniform(RateGrid::new(1, 5).unwrap());
        assert!(Pmf::min_pmf(&[&a, &b]).is_err());
    }

    #[test]
    fn min_pmf_matches_enumeration_oracle() {
        // Exhaustive enumeration over the joint grid for three hand-picked pmfs.
        let g = RateGrid::new(1, 4).unwrap();
        let ps = [
            Pmf::from_mass(g, vec![1., 2., 3., 4.]).unwrap(),
            Pmf::from_mass(g, vec![4., 1., 1., 4.]).unwrap(),
            Pmf::from_mass(g, vec![0.5, 0.5, 2., 1.]).unwrap(),
        ];
        let mut expect = [0.0; 4];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let w = ps[0].values()[a] * ps[1].values()[b] * ps[2].values()[c];
                    expect[a.min(b).min(c)] += w;
                }
            }
        }
        let m = Pmf::min_pmf(&[&ps[0], &ps[1], &ps[2]]).unwrap();
        for i in 0..4 {
            assert!((m.values()[i] - expect[i]).abs() < 1e-12);
        }
    }
}
