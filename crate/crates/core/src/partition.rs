use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Times matching within this distance are treated as the same grid point.
const TIME_MATCH: f64 = 1e-12;

/// Strictly increasing time grid `0 = t₀ < t₁ < … < tₙ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Partition {
    times: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Partition {
    type Error = Error;

    fn try_from(times: Vec<f64>) -> Result<Self> {
        Partition::new(times)
    }
}

impl From<Partition> for Vec<f64> {
    fn from(p: Partition) -> Self {
        p.times
    }
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPartition("need at least the times 0 and 1".into()));
        }
        if times[0] != 0.0 || times[times.len() - 1] != 1.0 {
            return Err(Error::InvalidPartition("partition must start at 0 and end at 1".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPartition("times must be strictly increasing".into()));
        }
        Ok(Partition { times })
    }

    /// `n` equal segments.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("segment count must be positive".into()));
        }
        Partition::new((0..=n).map(|i| i as f64 / n as f64).collect())
    }

    /// `2^k` equal segments.
    pub fn dyadic(k: u32) -> Result<Self> {
        Partition::uniform(1usize << k)
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    /// All times including `t₀ = 0`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Segment count n.
    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    pub fn mesh(&self) -> f64 {
        self.gaps().fold(0.0, f64::max)
    }

    /// For each time of `self` after 0, the index of the same time among the
    /// nonzero times of `finer`. Errors unless `self ⊆ finer`.
    pub fn embedding_indices(&self, finer: &Partition) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.segments());
        let mut j = 1;
        for &t in &self.times[1..] {
            while j < finer.times.len() && finer.times[j] < t - TIME_MATCH {
                j += 1;
            }
            if j == finer.times.len() || (finer.times[j] - t).abs() > TIME_MATCH {
                return Err(Error::NotNested);
            }
            out.push(j - 1);
            j += 1;
        }
        Ok(out)
    }

    pub fn is_subset_of(&self, other: &Partition) -> bool {
        self.embedding_indices(other).is_ok()
    }

    /// True for `t_i = i/n`.
    pub fn is_uniform(&self) -> bool {
        let n = self.segments() as f64;
        self.times.iter().enumerate().all(|(i, &t)| (t - i as f64 / n).abs() <= TIME_MATCH)
    }

    /// Compact text form: `uniform(n)` or the times joined by `;`.
    pub fn descriptor(&self) -> String {
        if self.is_uniform() {
            format!("uniform({})", self.segments())
        } else {
            self.times.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";")
        }
    }

    /// True when both partitions hold the same times.
    pub fn same_as(&self, other: &Partition) -> bool {
        self.times.len() == other.times.len()
            && self.times.iter().zip(&other.times).all(|(a, b)| (a - b).abs() <= TIME_MATCH)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mesh() {
        let p = Partition::uniform(4).unwrap();
        assert_eq!(p.segments(), 4);
        assert_eq!(p.mesh(), 0.25);
        assert_eq!(p.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(p.descriptor(), "uniform(4)");
        assert_eq!(Partition::new(vec![0.0, 0.3, 1.0]).unwrap().descriptor(), "0;0.3;1");
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Partition::new(vec![0.0, 0.5]).is_err());
        assert!(Partition::new(vec![0.1, 1.0]).is_err());
        assert!(Partition::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Partition::new(vec![0.0, 0.6, 0.4, 1.0]).is_err());
        assert!(Partition::uniform(0).is_err());
    }

    #[test]
    fn nesting() {
        let coarse = Partition::new(vec![0.0, 0.5, 1.0]).unwrap();
        let fine = Partition::new(vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        assert_eq!(coarse.embedding_indices(&fine).unwrap(), vec![1, 2]);
        assert!(matches!(fine.embedding_indices(&coarse), Err(Error::NotNested)));
        // non-dyadic nesting matches despite rounding
        let thirds = Partition::uniform(3).unwrap();
        let sixths = Partition::uniform(6).unwrap();
        assert_eq!(thirds.embedding_indices(&sixths).unwrap(), vec![1, 3, 5]);
        assert!(!Partition::uniform(4).unwrap().is_subset_of(&Partition::uniform(6).unwrap()));
    }

    #[test]
    fn serde_validates() {
        let p: Partition = serde_json::from_str("[0.0, 0.3, 1.0]").unwrap();
        assert_eq!(p.segments(), 2);
        assert!(serde_json::from_str::<Partition>("[0.0, 0.3]").is_err());
    }
}
