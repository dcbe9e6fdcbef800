use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Candidate dimensions `d_1 < ... < d_K` and the disjoint embedding regions
/// they induce. Region `m` covers positions `[d_{m-1}, d_m)` of the
/// `d_K`-wide embedding (with `d_0 = 0`), so its size is
/// `c_m = d_m - d_{m-1}`. A leading candidate of 0 yields an empty region
/// that acts as the "drop this field" choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SearchSpace {
    candidates: Vec<usize>,
    sizes: Vec<usize>,
    region_of: Vec<usize>,
}

impl TryFrom<Vec<usize>> for SearchSpace {
    type Error = Error;

    fn try_from(candidates: Vec<usize>) -> Result<Self> {
        SearchSpace::new(candidates)
    }
}

impl From<SearchSpace> for Vec<usize> {
    fn from(space: SearchSpace) -> Self {
        space.candidates
    }
}

impl SearchSpace {
    pub fn new(candidates: Vec<usize>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument(
                "search space must not be empty".into(),
            ));
        }
        if let Some(w) = candidates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "search space must be strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        let d_k = *candidates.last().unwrap();
        if d_k == 0 {
            return Err(Error::InvalidArgument(
                "largest candidate dimension must be positive".into(),
            ));
        }
        let mut sizes = Vec::with_capacity(candidates.len());
        let mut region_of = Vec::with_capacity(d_k);
        let mut prev = 0;
        for (m, &d) in candidates.iter().enumerate() {
            sizes.push(d - prev);
            region_of.extend(std::iter::repeat_n(m, d - prev));
            prev = d;
        }
        Ok(Self {
            candidates,
            sizes,
            region_of,
        })
    }

    /// Parses `"0,1,2,4,8"`.
    pub fn parse(text: &str) -> Result<Self> {
        let candidates = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad search space entry {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(candidates)
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    /// K, the number of regions.
    pub fn num_regions(&self) -> usize {
        self.candidates.len()
    }

    /// `d_K`, the full embedding width.
    pub fn max_dim(&self) -> usize {
        self.region_of.len()
    }

    /// Region sizes `c_1..c_K`.
    pub fn region_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Region that owns each of the `d_K` positions.
    pub fn region_of(&self) -> &[usize] {
        &self.region_of
    }

    /// Binary mask of region `m` over the `d_K` positions.
    pub fn mask(&self, m: usize) -> Vec<bool> {
        self.region_of.iter().map(|&r| r == m).collect()
    }

    pub fn has_zero_dim(&self) -> bool {
        self.candidates[0] == 0
    }

    /// The same space with a leading 0 candidate removed.
    pub fn without_zero_dim(&self) -> Result<Self> {
        if self.has_zero_dim() {
            Self::new(self.candidates[1..].to_vec())
        } else {
            Ok(self.clone())
        }
    }
}

impl std::fmt::Display for SearchSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.candidates.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}
