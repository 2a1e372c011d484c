//! Which ordered class pairs `(numerator, denominator)` get an
//! eigenproblem.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use rand::seq::{index, SliceRandom};

use crate::error::{GemError, Result};
use crate::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    AllPairs,
    Hypercube,
    Uniform,
    Stratified,
    /// Read from a file or supplied by the caller.
    Fixed,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::AllPairs => "all",
            Strategy::Hypercube => "hypercube",
            Strategy::Uniform => "uniform",
            Strategy::Stratified => "stratified",
            Strategy::Fixed => "fixed",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = GemError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" | "all-pairs" => Strategy::AllPairs,
            "hypercube" => Strategy::Hypercube,
            "uniform" | "random" => Strategy::Uniform,
            "stratified" => Strategy::Stratified,
            "fixed" => Strategy::Fixed,
            other => return Err(GemError::invalid(format!("unknown pair strategy {other:?}"))),
        })
    }
}

/// Ordered pairs of zero-based class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPlan {
    pub pairs: Vec<(usize, usize)>,
    pub strategy: Strategy,
    pub seed: u64,
}

impl PairPlan {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Classes that occur in at least one pair.
    pub fn classes(&self) -> BTreeSet<usize> {
        self.pairs.iter().flat_map(|&(i, j)| [i, j]).collect()
    }

    /// One `"i j"` line per pair, 1-based.
    pub fn to_text(&self) -> String {
        self.pairs.iter().map(|(i, j)| format!("{} {}\n", i + 1, j + 1)).collect()
    }

    /// Parses `"i j"` lines (1-based). Blank lines and `#` comments are
    /// skipped.
    pub fn from_text(reader: impl BufRead, k: usize) -> Result<PairPlan> {
        let mut pairs = Vec::new();
        let mut seen = BTreeSet::new();
        for (no, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let bad = |message: String| GemError::Parse { line: no + 1, message };
            let nums: Vec<usize> = t
                .split_whitespace()
                .map(|s| s.parse::<usize>().map_err(|_| bad(format!("bad class {s:?}"))))
                .collect::<Result<_>>()?;
            let [i, j] = nums[..] else {
                return Err(bad("expected two classes".into()));
            };
            if i == 0 || j == 0 || i > k || j > k {
                return Err(bad(format!("classes must lie in 1..={k}")));
            }
            if i == j {
                return Err(bad("a pair needs two distinct classes".into()));
            }
            if !seen.insert((i - 1, j - 1)) {
                return Err(bad(format!("duplicate pair {i} {j}")));
            }
            pairs.push((i - 1, j - 1));
        }
        Ok(PairPlan { pairs, strategy: Strategy::Fixed, seed: 0 })
    }
}

fn require_two(k: usize) -> Result<()> {
    if k < 2 {
        return Err(GemError::invalid(format!("need at least 2 classes, got {k}")));
    }
    Ok(())
}

/// All `k (k - 1)` ordered pairs, lexicographic.
pub fn all_pairs(k: usize) -> Result<PairPlan> {
    require_two(k)?;
    let pairs = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    Ok(PairPlan { pairs, strategy: Strategy::AllPairs, seed: 0 })
}

/// Places the labels on distinct random vertices of the `ceil(log2 k)`-cube
/// and pairs labels whose vertices differ in one bit, in both directions.
/// Returns the plan and the vertex of each label.
pub fn hypercube_layout(k: usize, seed: u64) -> Result<(PairPlan, Vec<u32>)> {
    require_two(k)?;
    let bits = usize::BITS - (k - 1).leading_zeros();
    let mut vertices: Vec<u32> = (0..1u32 << bits).collect();
    vertices.shuffle(&mut seeded_rng(seed));
    vertices.truncate(k);

    let mut set = BTreeSet::new();
    for a in 0..k {
        for b in 0..k {
            if a != b && (vertices[a] ^ vertices[b]).count_ones() == 1 {
                set.insert((a, b));
            }
        }
    }
    // Occupied vertices without an occupied neighbor are joined to their
    // nearest occupied vertex (smallest Hamming distance, then label).
    for a in 0..k {
        let isolated = !(0..k).any(|b| b != a && (vertices[a] ^ vertices[b]).count_ones() == 1);
        if isolated {
            let b = (0..k)
                .filter(|&b| b != a)
                .min_by_key(|&b| ((vertices[a] ^ vertices[b]).count_ones(), b))
                .expect("k >= 2");
            set.insert((a, b));
            set.insert((b, a));
        }
    }
    let plan = PairPlan { pairs: set.into_iter().collect(), strategy: Strategy::Hypercube, seed };
    Ok((plan, vertices))
}

pub fn hypercube_pairs(k: usize, seed: u64) -> Result<PairPlan> {
    hypercube_layout(k, seed).map(|(plan, _)| plan)
}

/// `count` distinct ordered pairs. Uniform mode samples without
/// replacement; stratified mode balances how often each class is numerator
/// and denominator (counts differ by at most one).
pub fn random_pairs(k: usize, count: usize, seed: u64, stratified: bool) -> Result<PairPlan> {
    require_two(k)?;
    let total = k * (k - 1);
    if count == 0 || count > total {
        return Err(GemError::invalid(format!("pair count must lie in 1..={total}, got {count}")));
    }
    let mut rng = seeded_rng(seed);
    let mut pairs: Vec<(usize, usize)> = if stratified {
        // Each cyclic shift s of a random label order contributes k pairs in
        // which every label is numerator once and denominator once. Taking
        // whole shifts plus a prefix of one more keeps the balance within 1.
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let mut shifts: Vec<usize> = (1..k).collect();
        shifts.shuffle(&mut rng);
        (0..count)
            .map(|r| {
                let s = shifts[r / k];
                let t = r % k;
                (order[t], order[(t + s) % k])
            })
            .collect()
    } else {
        index::sample(&mut rng, total, count)
            .into_iter()
            .map(|idx| {
                let i = idx / (k - 1);
                let r = idx % (k - 1);
                (i, if r >= i { r + 1 } else { r })
            })
            .collect()
    };
    pairs.sort_unstable();
    let strategy = if stratified { Strategy::Stratified } else { Strategy::Uniform };
    Ok(PairPlan { pairs, strategy, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_pairs_small() {
        let p = all_pairs(3).unwrap();
        assert_eq!(p.pairs, vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
        assert_eq!(all_pairs(2).unwrap().pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(all_pairs(10).unwrap().len(), 90);
        assert!(all_pairs(1).is_err());
    }

    #[test]
    fn hypercube_power_of_two_sizes() {
        assert_eq!(hypercube_pairs(4, 1).unwrap().len(), 8);
        assert_eq!(hypercube_pairs(8, 1).unwrap().len(), 24);
        assert_eq!(hypercube_pairs(16, 9).unwrap().len(), 64);
        assert_eq!(hypercube_pairs(2, 3).unwrap().len(), 2);
    }

    #[test]
    fn hypercube_five_matches_neighbor_scan() {
        for seed in 0..50 {
            let (plan, verts) = hypercube_layout(5, seed).unwrap();
            let mut expect = BTreeSet::new();
            for a in 0..5 {
                let nbrs: Vec<usize> =
                    (0..5).filter(|&b| b != a && (verts[a] ^ verts[b]).count_ones() == 1).collect();
                if nbrs.is_empty() {
                    let mut best = (u32::MAX, usize::MAX);
                    for b in (0..5).filter(|&b| b != a) {
                        best = best.min(((verts[a] ^ verts[b]).count_ones(), b));
                    }
                    expect.insert((a, best.1));
                    expect.insert((best.1, a));
                }
                for b in nbrs {
                    expect.insert((a, b));
                }
            }
            assert_eq!(plan.pairs, expect.into_iter().collect::<Vec<_>>(), "seed {seed}");
            assert!(verts.iter().all(|&v| v < 8));
        }
    }

    #[test]
    fn random_full_count_is_all_pairs() {
        for stratified in [false, true] {
            let p = random_pairs(5, 20, 3, stratified).unwrap();
            assert_eq!(p.pairs, all_pairs(5).unwrap().pairs);
        }
    }

    #[test]
    fn stratified_balance_k4() {
        let p = random_pairs(4, 4, 17, true).unwrap();
        let mut num = [0; 4];
        let mut den = [0; 4];
        for &(i, j) in &p.pairs {
            num[i] += 1;
            den[j] += 1;
        }
        assert_eq!(num, [1; 4]);
        assert_eq!(den, [1; 4]);
    }

    #[test]
    fn random_is_deterministic() {
        assert_eq!(random_pairs(9, 20, 5, false).unwrap(), random_pairs(9, 20, 5, false).unwrap());
        assert_eq!(random_pairs(9, 20, 5, true).unwrap(), random_pairs(9, 20, 5, true).unwrap());
        assert!(random_pairs(4, 13, 0, false).is_err());
        assert!(random_pairs(4, 0, 0, true).is_err());
    }

    #[test]
    fn text_round_trip() {
        let p = hypercube_pairs(6, 2).unwrap();
        let back = PairPlan::from_text(p.to_text().as_bytes(), 6).unwrap();
        assert_eq!(back.pairs, p.pairs);
        assert!(PairPlan::from_text("1 1\n".as_bytes(), 3).is_err());
        assert!(PairPlan::from_text("1 4\n".as_bytes(), 3).is_err());
        assert!(PairPlan::from_text("1 2\n1 2\n".as_bytes(), 3).is_err());
        assert!(matches!(PairPlan::from_text("1 2\n2\n".as_bytes(), 3), Err(GemError::Parse { line: 2, .. })));
    }
}
