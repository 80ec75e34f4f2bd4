use alloc::string::String;
use alloc::vec::Vec;

use super::{mean_std, ProbeError};
use crate::geometry::{geodesic_distance, hamming_distance};
use crate::nn::Network;
use crate::symmetry::{canonical_pair, normalize};

/// Named set of solutions (usually one training algorithm).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionGroup {
    pub name: String,
    pub nets: Vec<Network>,
}

/// Pairwise distance statistics between two groups.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub group_a: String,
    pub group_b: String,
    pub raw_mean: f64,
    pub raw_std: f64,
    pub aligned_mean: f64,
    pub aligned_std: f64,
    pub pairs: usize,
}

/// Raw and symmetry-removed distances between two solutions.
///
/// Binary networks: Hamming distance before and after alignment.
/// Continuous networks: geodesic distance after normalization only, and
/// after normalization plus alignment.
pub fn pair_distances(a: &Network, b: &Network) -> Result<(f64, f64), ProbeError> {
    if a.is_binary() {
        let raw = hamming_distance(a, b)? as f64;
        let (ca, cb) = canonical_pair(a, b)?;
        Ok((raw, hamming_distance(&ca, &cb)? as f64))
    } else {
        let raw = geodesic_distance(&normalize(a)?, &normalize(b)?)?;
        let (ca, cb) = canonical_pair(a, b)?;
        Ok((raw, geodesic_distance(&ca, &cb)?))
    }
}

/// Mean ± std of pairwise distances for every unordered pair of groups
/// (including each group with itself, over distinct members).
pub fn distance_study(groups: &[SolutionGroup], binary: bool) -> Result<Vec<DistanceRow>, ProbeError> {
    for g in groups {
        if g.nets.len() < 2 {
            return Err(ProbeError::Config("every group needs at least two solutions"));
        }
        if g.nets.iter().any(|n| n.is_binary() != binary) {
            return Err(ProbeError::Config("group kind does not match the binary flag"));
        }
    }
    let mut rows = Vec::new();
    for (ga, a) in groups.iter().enumerate() {
        for b in &groups[ga..] {
            let same = core::ptr::eq(a, b);
            let mut raw = Vec::new();
            let mut aligned = Vec::new();
            for (i, na) in a.nets.iter().enumerate() {
                let start = if same { i + 1 } else { 0 };
                for nb in &b.nets[start..] {
                    let (r, al) = pair_distances(na, nb)?;
                    raw.push(r);
                    aligned.push(al);
                }
            }
            let (raw_mean, raw_std) = mean_std(&raw);
            let (aligned_mean, aligned_std) = mean_std(&aligned);
            rows.push(DistanceRow {
                group_a: a.name.clone(),
                group_b: b.name.clone(),
                raw_mean,
                raw_std,
                aligned_mean,
                aligned_std,
                pairs: raw.len(),
            });
        }
    }
    Ok(rows)
}
