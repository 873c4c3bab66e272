//! Sampled lineshapes: signal against beat detuning δ.

use std::io::{BufRead, BufReader, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::trajectory::{ParamsSnapshot, Tier};

/// Where a spectrum came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SpectrumSource {
    Model(ParamsSnapshot),
    Import { origin: String },
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    delta: Vec<f64>,
    signal: Vec<f64>,
    pub tier: Tier,
    pub source: SpectrumSource,
}

impl Spectrum {
    /// Validates a strictly increasing, finite grid of matching length.
    pub fn new(delta: Vec<f64>, signal: Vec<f64>, tier: Tier, source: SpectrumSource) -> Result<Self> {
        if delta.len() != signal.len() {
            return Err(Error::Data(format!(
                "grid has {} points but signal has {}",
                delta.len(),
                signal.len()
            )));
        }
        if let Some(i) = delta.iter().chain(signal.iter()).position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at position {i}")));
        }
        if let Some(w) = delta.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "delta grid must be strictly increasing (index {} -> {})",
                w,
                w + 1
            )));
        }
        Ok(Self {
            delta,
            signal,
            tier,
            source,
        })
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.delta.iter().copied().zip(self.signal.iter().copied())
    }

    /// Copy with additive Gaussian noise of standard deviation `sigma`,
    /// reproducible from `seed`.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", format!("must be non-negative, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::param("sigma", e.to_string()))?;
        let signal = self.signal.iter().map(|v| v + normal.sample(&mut rng)).collect();
        Ok(Self {
            signal,
            ..self.clone()
        })
    }

    /// Two-column CSV `delta,signal` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta", "signal"])?;
        for (d, s) in self.iter() {
            w.write_record([d.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads two columns `(delta, signal)`. Lines starting with `#` are
    /// comments and a non-numeric first row is taken as a header. Rows are
    /// sorted by delta; duplicate deltas are rejected.
    pub fn read_csv<R: Read>(input: R, origin: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seen_data = false;
        for (lineno, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split([',', ';', '\t', ' ']).filter(|f| !f.is_empty()).collect();
            if fields.len() < 2 {
                return Err(Error::Data(format!("{origin}:{}: expected two columns", lineno + 1)));
            }
            match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
                (Ok(d), Ok(s)) => {
                    rows.push((d, s));
                    seen_data = true;
                }
                _ if !seen_data && rows.is_empty() => continue, // header
                _ => return Err(Error::Data(format!("{origin}:{}: cannot parse `{trimmed}`", lineno + 1))),
            }
        }
        if rows.is_empty() {
            return Err(Error::Data(format!("{origin}: no data rows")));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (delta, signal) = rows.into_iter().unzip();
        Self::new(
            delta,
            signal,
            Tier::Imported,
            SpectrumSource::Import {
                origin: origin.to_string(),
            },
        )
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
