//! Zipf content popularity and the most-popular-first cache hit ratio.

use crate::error::{Error, Result};
use crate::params::CacheParams;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sum of g^-exponent for g = 1..=n.
fn zipf_partial_sum(n: u64, exponent: f64) -> f64 {
    let mut acc = KahanSum::default();
    for g in 1..=n {
        acc.add((g as f64).powf(-exponent));
    }
    acc.value()
}

/// Zipf request probabilities over the library, most popular file first.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityProfile {
    probabilities: Vec<f64>,
    normalizer: f64,
    /// cumulative[c] = hit ratio of a cache holding the c most popular files.
    cumulative: Vec<f64>,
}

impl PopularityProfile {
    pub fn new(cache: &CacheParams) -> Self {
        let f = cache.library_size;
        let weights: Vec<f64> = (1..=f).map(|g| (g as f64).powf(-cache.zipf_exponent)).collect();
        let mut total = KahanSum::default();
        for &w in &weights {
            total.add(w);
        }
        let normalizer = total.value();
        let probabilities = weights.iter().map(|w| w / normalizer).collect();

        let mut cumulative = Vec::with_capacity(weights.len() + 1);
        cumulative.push(0.0);
        let mut head = KahanSum::default();
        for &w in &weights {
            head.add(w);
            cumulative.push(head.value() / normalizer);
        }
        // The full library is a certain hit regardless of rounding.
        *cumulative.last_mut().expect("library is non-empty") = 1.0;

        PopularityProfile {
            probabilities,
            normalizer,
            cumulative,
        }
    }

    pub fn library_size(&self) -> u64 {
        self.probabilities.len() as u64
    }

    /// Σ g^-γ over the library.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Popularity of the file with 1-based rank `f`.
    pub fn probability(&self, f: u64) -> Result<f64> {
        if f == 0 || f > self.library_size() {
            return Err(Error::IndexOutOfLibrary {
                index: f,
                library_size: self.library_size(),
            });
        }
        Ok(self.probabilities[(f - 1) as usize])
    }

    /// Hit ratio of a cache holding the `c` most popular files.
    pub fn hit_ratio(&self, c: u64) -> Result<f64> {
        self.cumulative
            .get(c as usize)
            .copied()
            .ok_or(Error::IndexOutOfLibrary {
                index: c,
                library_size: self.library_size(),
            })
    }
}

/// p_f = f^-γ / Σ_g g^-γ.
pub fn zipf_popularity(cache: &CacheParams, f: u64) -> Result<f64> {
    if f == 0 || f > cache.library_size {
        return Err(Error::IndexOutOfLibrary {
            index: f,
            library_size: cache.library_size,
        });
    }
    let normalizer = zipf_partial_sum(cache.library_size, cache.zipf_exponent);
    Ok((f as f64).powf(-cache.zipf_exponent) / normalizer)
}

/// Probability that a request hits an SBS caching the `cache_size` most
/// popular files.
pub fn cache_hit_ratio(cache: &CacheParams) -> f64 {
    if cache.cache_size == 0 {
        return 0.0;
    }
    if cache.cache_size >= cache.library_size {
        return 1.0;
    }
    let head = zipf_partial_sum(cache.cache_size, cache.zipf_exponent);
    let total = zipf_partial_sum(cache.library_size, cache.zipf_exponent);
    (head / total).min(1.0)
}
