use super::{MultiScaleCodes, QuantizerLevel};

/// Token histogram of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelUsage {
    pub counts: Vec<u64>,
    /// Shannon entropy of the histogram divided by `ln K`, in `[0, 1]`.
    pub entropy: f64,
}

/// Per-level codebook utilisation. Tokens outside a level's codebook are
/// not counted.
pub fn codebook_usage(codes: &MultiScaleCodes, levels: &[QuantizerLevel]) -> Vec<LevelUsage> {
    codes
        .levels
        .iter()
        .zip(levels)
        .map(|(tokens, level)| {
            let size = level.codebook.size();
            let mut counts = vec![0u64; size];
            for &t in tokens {
                if let Some(c) = counts.get_mut(t as usize) {
                    *c += 1;
                }
            }
            LevelUsage {
                entropy: normalized_entropy(&counts),
                counts,
            }
        })
        .collect()
}

fn normalized_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 || counts.len() < 2 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    (h / (counts.len() as f64).ln()).clamp(0.0, 1.0)
}
