//! Finite scalar quantization: per-dimension rounding of a squashed latent,
//! mixed-radix code indices, utilization and token stream files.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FsqError {
    #[error("invalid levels: {0}")]
    Levels(String),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite latent at dimension {0}")]
    NonFinite(usize),
    #[error("code {value} out of range for dimension {dim} with {levels} levels")]
    OutOfRange { dim: usize, value: u32, levels: u32 },
    #[error("index {0} outside the codebook")]
    IndexOutOfRange(u64),
    #[error("codebook size overflows {0}")]
    Overflow(&'static str),
    #[error("bad token file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsqConfig {
    pub levels: Vec<u32>,
}

impl FsqConfig {
    pub fn new(levels: Vec<u32>) -> Result<Self, FsqError> {
        let cfg = Self { levels };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Level factorizations used for the standard codebook sizes.
    pub fn for_codebook(size: u64) -> Option<Self> {
        let levels = match size {
            512 => vec![8, 8, 8],
            1024 => vec![4, 4, 4, 4, 4],
            2048 => vec![8, 16, 16],
            4096 => vec![16, 16, 16],
            _ => return None,
        };
        Some(Self { levels })
    }

    pub fn validate(&self) -> Result<(), FsqError> {
        if self.levels.is_empty() {
            return Err(FsqError::Levels("no dimensions".into()));
        }
        if let Some(l) = self.levels.iter().find(|&&l| l < 2) {
            return Err(FsqError::Levels(format!("level count {l} < 2")));
        }
        self.codebook_size()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// Product of the levels.
    pub fn codebook_size(&self) -> Result<u64, FsqError> {
        self.levels
            .iter()
            .try_fold(1u64, |acc, &l| acc.checked_mul(l as u64))
            .ok_or(FsqError::Overflow("u64"))
    }

    fn check_len(&self, n: usize) -> Result<(), FsqError> {
        if n != self.dim() {
            return Err(FsqError::Length {
                expected: self.dim(),
                got: n,
            });
        }
        Ok(())
    }

    /// `round(sigmoid(y_d)·(L_d − 1))`, ties away from zero.
    pub fn quantize(&self, y: &[f64]) -> Result<Vec<u32>, FsqError> {
        self.check_len(y.len())?;
        y.iter()
            .zip(&self.levels)
            .enumerate()
            .map(|(d, (&v, &l))| {
                if !v.is_finite() {
                    return Err(FsqError::NonFinite(d));
                }
                Ok((sigmoid(v) * (l - 1) as f64).round() as u32)
            })
            .collect()
    }

    /// `q_d / (L_d − 1)`.
    pub fn dequantize(&self, q: &[u32]) -> Result<Vec<f64>, FsqError> {
        self.check_codes(q)?;
        Ok(q.iter()
            .zip(&self.levels)
            .map(|(&v, &l)| v as f64 / (l - 1) as f64)
            .collect())
    }

    fn check_codes(&self, q: &[u32]) -> Result<(), FsqError> {
        self.check_len(q.len())?;
        for (dim, (&value, &levels)) in q.iter().zip(&self.levels).enumerate() {
            if value >= levels {
                return Err(FsqError::OutOfRange { dim, value, levels });
            }
        }
        Ok(())
    }

    /// Mixed-radix index, last dimension fastest.
    pub fn code_index(&self, q: &[u32]) -> Result<u64, FsqError> {
        self.check_codes(q)?;
        q.iter().zip(&self.levels).try_fold(0u64, |acc, (&v, &l)| {
            acc.checked_mul(l as u64)
                .and_then(|a| a.checked_add(v as u64))
                .ok_or(FsqError::Overflow("u64"))
        })
    }

    /// Inverse of [`FsqConfig::code_index`].
    pub fn code_from_index(&self, index: u64) -> Result<Vec<u32>, FsqError> {
        if index >= self.codebook_size()? {
            return Err(FsqError::IndexOutOfRange(index));
        }
        let mut rest = index;
        let mut out = vec![0u32; self.dim()];
        for (o, &l) in out.iter_mut().zip(&self.levels).rev() {
            *o = (rest % l as u64) as u32;
            rest /= l as u64;
        }
        Ok(out)
    }

    /// Index as a 32-bit token.
    pub fn token(&self, q: &[u32]) -> Result<u32, FsqError> {
        let i = self.code_index(q)?;
        u32::try_from(i).map_err(|_| FsqError::Overflow("u32"))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Distinct codes seen so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utilization {
    pub codebook_size: u64,
    seen: HashSet<u64>,
}

impl Utilization {
    pub fn new(cfg: &FsqConfig) -> Result<Self, FsqError> {
        Ok(Self {
            codebook_size: cfg.codebook_size()?,
            seen: HashSet::new(),
        })
    }

    pub fn add(&mut self, index: u64) -> Result<(), FsqError> {
        if index >= self.codebook_size {
            return Err(FsqError::IndexOutOfRange(index));
        }
        self.seen.insert(index);
        Ok(())
    }

    pub fn merge(&mut self, other: &Utilization) -> Result<(), FsqError> {
        if other.codebook_size != self.codebook_size {
            return Err(FsqError::Levels("merging different codebooks".into()));
        }
        self.seen.extend(other.seen.iter().copied());
        Ok(())
    }

    pub fn distinct(&self) -> usize {
        self.seen.len()
    }

    pub fn fraction(&self) -> f64 {
        self.seen.len() as f64 / self.codebook_size as f64
    }
}

/// Fraction of the codebook used by a stream of codes.
pub fn utilization<'a>(
    cfg: &FsqConfig,
    codes: impl IntoIterator<Item = &'a [u32]>,
) -> Result<f64, FsqError> {
    let mut u = Utilization::new(cfg)?;
    for q in codes {
        u.add(cfg.code_index(q)?)?;
    }
    Ok(u.fraction())
}

/// JSON header of a token file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenHeader {
    pub levels: Vec<u32>,
    pub dim: usize,
    pub count: usize,
}

pub fn encode_tokens(tokens: &[u32]) -> Vec<u8> {
    tokens.iter().flat_map(|t| t.to_le_bytes()).collect()
}

pub fn decode_tokens(bytes: &[u8], header: &TokenHeader) -> Result<Vec<u32>, FsqError> {
    if bytes.len() != header.count * 4 {
        return Err(FsqError::Format(format!(
            "{} bytes for {} tokens",
            bytes.len(),
            header.count
        )));
    }
    let cfg = FsqConfig::new(header.levels.clone())?;
    if cfg.dim() != header.dim {
        return Err(FsqError::Format("dim does not match levels".into()));
    }
    let size = cfg.codebook_size()?;
    bytes
        .chunks_exact(4)
        .map(|c| {
            let t = u32::from_le_bytes(c.try_into().expect("4 bytes"));
            if t as u64 >= size {
                Err(FsqError::IndexOutOfRange(t as u64))
            } else {
                Ok(t)
            }
        })
        .collect()
}

/// Writes `bin` (little-endian u32 tokens) and `bin.json` (header).
pub fn write_tokens(bin: &Path, cfg: &FsqConfig, tokens: &[u32]) -> Result<(), FsqError> {
    let header = TokenHeader {
        levels: cfg.levels.clone(),
        dim: cfg.dim(),
        count: tokens.len(),
    };
    fs::write(bin, encode_tokens(tokens))?;
    fs::write(
        crate::repr::sidecar_path(bin),
        serde_json::to_string_pretty(&header).expect("header serializes"),
    )?;
    Ok(())
}

pub fn read_tokens(bin: &Path) -> Result<(TokenHeader, Vec<u32>), FsqError> {
    let text = fs::read_to_string(crate::repr::sidecar_path(bin))?;
    let header: TokenHeader =
        serde_json::from_str(&text).map_err(|e| FsqError::Format(e.to_string()))?;
    let tokens = decode_tokens(&fs::read(bin)?, &header)?;
    Ok((header, tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(levels: &[u32]) -> FsqConfig {
        FsqConfig::new(levels.to_vec()).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let c = cfg(&[9]);
        assert_eq!(c.quantize(&[0.0]).unwrap(), vec![4]);
        assert_eq!(c.quantize(&[1e6]).unwrap(), vec![8]);
        assert_eq!(c.quantize(&[-1e6]).unwrap(), vec![0]);
        assert_eq!(c.dequantize(&[4]).unwrap(), vec![0.5]);
        assert_eq!(c.dequantize(&[0]).unwrap(), vec![0.0]);
        assert_eq!(c.dequantize(&[8]).unwrap(), vec![1.0]);
        assert!(c.dequantize(&[9]).is_err());
        assert!(c.quantize(&[f64::NAN]).is_err());
        assert!(c.quantize(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn ties_round_away_from_zero() {
        // sigmoid(0) * 1 = 0.5 rounds up to 1 with two levels
        assert_eq!(cfg(&[2]).quantize(&[0.0]).unwrap(), vec![1]);
        assert_eq!(cfg(&[4]).quantize(&[0.0]).unwrap(), vec![2]);
    }

    #[test]
    fn matches_direct_formula() {
        let c = cfg(&[5, 9, 16, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-6.0..6.0)).collect();
            let q = c.quantize(&y).unwrap();
            for d in 0..4 {
                let s = 1.0 / (1.0 + f64::exp(-y[d]));
                let x = s * (c.levels[d] - 1) as f64;
                let r = if x - x.floor() >= 0.5 {
                    x.floor() + 1.0
                } else {
                    x.floor()
                };
                assert_eq!(q[d] as f64, r);
            }
        }
    }

    #[test]
    fn round_trip_error_on_grid() {
        for l in [5u32, 9, 16] {
            let c = cfg(&[l]);
            let bound = 0.5 / (l - 1) as f64;
            for k in -1000..=1000 {
                let y = k as f64 * 0.01;
                let back = c.dequantize(&c.quantize(&[y]).unwrap()).unwrap()[0];
                assert!((sigmoid(y) - back).abs() <= bound + 1e-15, "L={l} y={y}");
            }
        }
    }

    #[test]
    fn index_examples_and_bijection() {
        assert_eq!(cfg(&[2, 2]).code_index(&[1, 0]).unwrap(), 2);
        for size in [512u64, 1024, 2048, 4096] {
            let c = FsqConfig::for_codebook(size).unwrap();
            assert_eq!(c.codebook_size().unwrap(), size);
            let mut seen = vec![false; size as usize];
            let mut u = Utilization::new(&c).unwrap();
            for i in 0..size {
                let q = c.code_from_index(i).unwrap();
                let j = c.code_index(&q).unwrap();
                assert_eq!(i, j);
                assert!(!seen[j as usize]);
                seen[j as usize] = true;
                u.add(j).unwrap();
            }
            assert_eq!(u.fraction(), 1.0);
            assert!(c.code_from_index(size).is_err());
        }
        assert!(FsqConfig::for_codebook(100).is_none());
        assert!(FsqConfig::new(vec![1, 4]).is_err());
        assert!(FsqConfig::new(vec![u32::MAX; 3]).is_err());
    }

    #[test]
    fn utilization_matches_hash_set() {
        let c = cfg(&[4, 5, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let codes: Vec<Vec<u32>> = (0..25)
            .map(|_| c.levels.iter().map(|&l| rng.random_range(0..l)).collect())
            .collect();
        let oracle: std::collections::BTreeSet<Vec<u32>> = codes.iter().cloned().collect();
        let got = utilization(&c, codes.iter().map(|q| q.as_slice())).unwrap();
        assert_eq!(got, oracle.len() as f64 / 60.0);

        let (a, b) = codes.split_at(10);
        let mut ua = Utilization::new(&c).unwrap();
        let mut ub = Utilization::new(&c).unwrap();
        a.iter()
            .for_each(|q| ua.add(c.code_index(q).unwrap()).unwrap());
        b.iter()
            .for_each(|q| ub.add(c.code_index(q).unwrap()).unwrap());
        ua.merge(&ub).unwrap();
        assert_eq!(ua.distinct(), oracle.len());
    }

    #[test]
    fn token_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = FsqConfig::for_codebook(4096).unwrap();
        let tokens: Vec<u32> = (0..100).map(|i| (i * 37) % 4096).collect();
        let p = dir.path().join("t.bin");
        write_tokens(&p, &c, &tokens).unwrap();
        let (h, back) = read_tokens(&p).unwrap();
        assert_eq!(back, tokens);
        assert_eq!(
            h,
            TokenHeader {
                levels: c.levels.clone(),
                dim: 3,
                count: 100
            }
        );
        assert_eq!(fs::read(&p).unwrap()[..4], 0u32.to_le_bytes());
        let bad = TokenHeader {
            count: 99,
            ..h.clone()
        };
        assert!(decode_tokens(&encode_tokens(&tokens), &bad).is_err());
        assert!(decode_tokens(&encode_tokens(&[5000]), &TokenHeader { count: 1, ..h }).is_err());
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent_through_the_lattice(
            y in proptest::collection::vec(-20.0f64..20.0, 3),
        ) {
            let c = cfg(&[5, 9, 16]);
            let q = c.quantize(&y).unwrap();
            // re-enter latent space through the logit of the lattice point
            let back: Vec<f64> = c
                .dequantize(&q)
                .unwrap()
                .iter()
                .map(|&s| {
                    let s = s.clamp(1e-12, 1.0 - 1e-12);
                    (s / (1.0 - s)).ln()
                })
                .collect();
            prop_assert_eq!(c.quantize(&back).unwrap(), q);
        }

        #[test]
        fn codes_stay_in_range(y in proptest::collection::vec(-1e3f64..1e3, 4)) {
            let c = cfg(&[2, 3, 7, 16]);
            let q = c.quantize(&y).unwrap();
            for (v, l) in q.iter().zip(&c.levels) {
                prop_assert!(v < l);
            }
            let i = c.code_index(&q).unwrap();
            prop_assert_eq!(c.code_from_index(i).unwrap(), q);
        }
    }
}
