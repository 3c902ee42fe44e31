//! Seeded synthetic ratings with planted low-rank structure.
//!
//! Scores come from an inner product of per-user and per-item factors plus
//! noise, quantized to the 1..5 integer scale. Which cells are observed is
//! itself preference-driven: the observation probability scales with a
//! logistic of the same affinity, so the support carries structure even
//! after binarization, the way real interaction data does. Item popularity
//! follows a power law on top, skewing the observed-count distribution.
//! Deterministic for a fixed config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::RatingRecord;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Planted latent dimension.
    pub rank: usize,
    /// Expected fraction of the full matrix that is observed.
    pub density: f64,
    /// Standard deviation of the additive score noise.
    pub noise: f64,
    /// Power-law exponent for item popularity (0 = uniform).
    pub popularity_skew: f64,
    /// How strongly observation probability follows affinity (0 = the
    /// support is independent of preferences).
    pub preference_sharpness: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 600,
            n_items: 300,
            rank: 5,
            density: 0.06,
            noise: 0.4,
            popularity_skew: 1.0,
            preference_sharpness: 3.0,
            seed: 42,
        }
    }
}

pub fn generate(config: &SynthConfig) -> Vec<RatingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let factors = |rng: &mut ChaCha8Rng, count: usize, rank: usize| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..rank).map(|_| gauss(rng)).collect())
            .collect()
    };
    let users = factors(&mut rng, config.n_users, config.rank);
    let items = factors(&mut rng, config.n_items, config.rank);

    let pop: Vec<f64> = (0..config.n_items)
        .map(|i| ((i + 1) as f64).powf(-config.popularity_skew))
        .collect();
    let scale = 1.3 / (config.rank as f64).sqrt();
    let affinity = |pu: &[f64], i: usize| -> f64 {
        pu.iter().zip(&items[i]).map(|(a, b)| a * b).sum()
    };
    let appeal = |pu: &[f64], i: usize| -> f64 {
        pop[i] / (1.0 + (-config.preference_sharpness * affinity(pu, i)).exp())
    };

    // Normalize the raw appeal weights so the expected overall density
    // matches the config; two streaming passes instead of one big table.
    let mut total = 0.0;
    for pu in &users {
        for i in 0..config.n_items {
            total += appeal(pu, i);
        }
    }
    let factor = config.density * (config.n_users * config.n_items) as f64 / total;

    let mut records = Vec::new();
    let mut stamp = 0i64;
    for (u, pu) in users.iter().enumerate() {
        let mut rated: Vec<usize> = (0..config.n_items)
            .filter(|&i| rng.gen_bool((factor * appeal(pu, i)).min(0.95)))
            .collect();
        // A user with nothing observed breaks nothing downstream, but keeps
        // the planted structure learnable if avoided.
        while rated.len() < 3 {
            let i = rng.gen_range(0..config.n_items);
            if !rated.contains(&i) {
                rated.push(i);
            }
        }
        rated.sort_unstable();
        for i in rated {
            let score = 3.0 + scale * affinity(pu, i) + config.noise * gauss(&mut rng);
            let value = score.round().clamp(1.0, 5.0);
            records.push(RatingRecord {
                user: (u + 1) as u64,
                item: (i + 1) as u64,
                value,
                timestamp: Some(stamp),
            });
            stamp += 1;
        }
    }
    records
}

/// Writes records in the `user::item::rating::timestamp` format.
pub fn write_ml_dat(path: &Path, records: &[RatingRecord]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(
            out,
            "{}::{}::{}::{}",
            r.user,
            r.item,
            r.value,
            r.timestamp.unwrap_or(0)
        )?;
    }
    out.flush()
}

/// Writes records as delimiter-separated `user,item,rating,timestamp` rows.
pub fn write_delimited(path: &Path, records: &[RatingRecord], delimiter: char) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(
            out,
            "{}{d}{}{d}{}{d}{}",
            r.user,
            r.item,
            r.value,
            r.timestamp.unwrap_or(0),
            d = delimiter
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_ratings, ParseOptions};

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let config = SynthConfig {
            n_users: 40,
            n_items: 30,
            ..Default::default()
        };
        let a = generate(&config);
        let b = generate(&config);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.user, x.item), (y.user, y.item));
            assert_eq!(x.value, y.value);
            assert!((1.0..=5.0).contains(&x.value));
            assert_eq!(x.value.fract(), 0.0);
        }
        // Everyone rated something.
        let mut seen = vec![false; config.n_users];
        for r in &a {
            seen[(r.user - 1) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn density_lands_near_target() {
        let config = SynthConfig {
            n_users: 300,
            n_items: 200,
            density: 0.05,
            ..Default::default()
        };
        let records = generate(&config);
        let density = records.len() as f64 / (300.0 * 200.0);
        assert!((0.03..0.08).contains(&density), "density {density}");
    }

    #[test]
    fn ml_dat_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.dat");
        let config = SynthConfig {
            n_users: 20,
            n_items: 15,
            ..Default::default()
        };
        let records = generate(&config);
        write_ml_dat(&path, &records).unwrap();
        let parsed = parse_ratings(&path, &ParseOptions::default()).unwrap();
        assert_eq!(parsed.len(), records.len());
        for (a, b) in parsed.iter().zip(&records) {
            assert_eq!((a.user, a.item, a.value), (b.user, b.item, b.value));
            assert_eq!(a.timestamp, b.timestamp);
        }
    }
}
