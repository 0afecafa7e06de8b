use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{GbsError, Result};
use crate::gaussian::SqueezingSpec;
use crate::pattern::OutputPattern;
use crate::validation::BinningPartition;

/// Which process produced a sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelTag {
    Ideal,
    Loss { eta_t: f64, method: super::LossMethod },
    Distinguishable { eta_ind: f64 },
    Thermal,
    Coherent { theta: f64 },
    Squashed,
    /// Drawn from an enumerated probability table.
    Table,
}

impl ModelTag {
    /// Noise level on a common axis: η for the noisy models, 1 otherwise.
    pub fn noise_parameter(&self) -> f64 {
        match self {
            ModelTag::Loss { eta_t, .. } => *eta_t,
            ModelTag::Distinguishable { eta_ind } => *eta_ind,
            _ => 1.0,
        }
    }
}

/// Ordered output patterns plus how they were made.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub model: ModelTag,
    pub spec: Option<SqueezingSpec>,
    pub seed: u64,
    pub m: usize,
    /// Per-mode cap; for binned sets the largest per-subset cap.
    pub n_cutoff: u16,
    pub partition: Option<BinningPartition>,
    pub patterns: Vec<OutputPattern>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleHeader {
    pub model: ModelTag,
    pub params: Option<SqueezingSpec>,
    pub seed: u64,
    pub m: usize,
    pub n_cutoff: u16,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<BinningPartition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    s: OutputPattern,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Mean total photon number per sample.
    pub fn mean_photons(&self) -> Result<f64> {
        if self.patterns.is_empty() {
            return Err(GbsError::InvalidInput("empty sample set".into()));
        }
        Ok(self.patterns.iter().map(|s| s.total() as f64).sum::<f64>() / self.patterns.len() as f64)
    }

    /// Checks the cutoff and zero-exclusion invariants.
    pub fn validate(&self) -> Result<()> {
        let caps = match &self.partition {
            Some(p) => p.subset_cutoffs(self.n_cutoff_per_mode()),
            None => vec![self.n_cutoff; self.m],
        };
        for s in &self.patterns {
            if s.m() != self.m {
                return Err(GbsError::InvalidInput(format!("pattern {:?} does not have {} modes", s.0, self.m)));
            }
            if s.is_zero() || s.0.iter().zip(&caps).any(|(c, cap)| c > cap) {
                return Err(GbsError::InvalidInput(format!("pattern {:?} is zero or above the cutoff", s.0)));
            }
        }
        Ok(())
    }

    fn n_cutoff_per_mode(&self) -> u16 {
        match &self.partition {
            Some(p) => {
                let widest = p.subsets().iter().map(Vec::len).max().unwrap_or(1) as u16;
                self.n_cutoff / widest
            }
            None => self.n_cutoff,
        }
    }

    pub fn header(&self) -> SampleHeader {
        SampleHeader {
            model: self.model.clone(),
            params: self.spec,
            seed: self.seed,
            m: self.m,
            n_cutoff: self.n_cutoff,
            n_samples: self.patterns.len(),
            partition: self.partition.clone(),
            config_hash: None,
        }
    }

    /// Header line then one `{"s":[..]}` line per sample.
    pub fn write_ndjson<W: Write>(&self, mut w: W, config_hash: Option<&str>) -> Result<()> {
        let mut header = self.header();
        header.config_hash = config_hash.map(str::to_owned);
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for s in &self.patterns {
            serde_json::to_writer(&mut w, &Record { s: s.clone() })?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<(Self, SampleHeader)> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| GbsError::Format("empty sample file".into()))??;
        let header: SampleHeader = serde_json::from_str(&first)?;
        let mut patterns = Vec::with_capacity(header.n_samples);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)?;
            if rec.s.m() != header.m {
                return Err(GbsError::Format(format!("sample {:?} does not have {} modes", rec.s.0, header.m)));
            }
            patterns.push(rec.s);
        }
        if patterns.len() != header.n_samples {
            return Err(GbsError::Format(format!(
                "header announces {} samples, found {}",
                header.n_samples,
                patterns.len()
            )));
        }
        let set = SampleSet {
            model: header.model.clone(),
            spec: header.params,
            seed: header.seed,
            m: header.m,
            n_cutoff: header.n_cutoff,
            partition: header.partition.clone(),
            patterns,
        };
        Ok((set, header))
    }

    /// One row per sample, columns `s1..sm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> = (1..=self.m).map(|j| format!("s{j}")).collect();
        writeln!(w, "{}", cols.join(","))?;
        for s in &self.patterns {
            let row: Vec<String> = s.0.iter().map(u16::to_string).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Per-subset photon sums under `partition`.
    pub fn binned(&self, partition: &BinningPartition) -> Result<SampleSet> {
        if self.partition.is_some() {
            return Err(GbsError::InvalidInput("sample set is already binned".into()));
        }
        if partition.m() != self.m {
            return Err(GbsError::InvalidInput(format!(
                "partition covers {} modes, samples have {}",
                partition.m(),
                self.m
            )));
        }
        let cutoff = partition.subset_cutoffs(self.n_cutoff).into_iter().max().unwrap_or(0);
        Ok(SampleSet {
            m: partition.len(),
            n_cutoff: cutoff,
            partition: Some(partition.clone()),
            patterns: self.patterns.iter().map(|s| partition.apply(s)).collect(),
            ..self.clone()
        })
    }
}

/// Ratio of mean total photon numbers, `samples / reference`.
pub fn mean_photon_ratio(samples: &SampleSet, reference: &SampleSet) -> Result<f64> {
    let a = samples.mean_photons()?;
    let b = reference.mean_photons()?;
    if b == 0.0 {
        return Err(GbsError::UndefinedRatio("reference has no photons".into()));
    }
    Ok(a / b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(patterns: Vec<Vec<u16>>) -> SampleSet {
        SampleSet {
            model: ModelTag::Loss { eta_t: 0.9, method: super::super::LossMethod::Thinning },
            spec: Some(SqueezingSpec::new(2, 3, 0.5).unwrap()),
            seed: 42,
            m: 3,
            n_cutoff: 2,
            partition: None,
            patterns: patterns.into_iter().map(OutputPattern).collect(),
        }
    }

    #[test]
    fn ndjson_round_trip() {
        let s = set(vec![vec![1, 0, 2], vec![0, 1, 0]]);
        let mut buf = Vec::new();
        s.write_ndjson(&mut buf, Some("h")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "{\"s\":[1,0,2]}");
        let (back, header) = SampleSet::read_ndjson(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert_eq!(header.n_samples, 2);
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        set(vec![vec![1, 0, 2]]).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "s1,s2,s3\n1,0,2\n");
    }

    #[test]
    fn ratio_and_errors() {
        let a = set(vec![vec![1, 0, 2], vec![0, 1, 0]]);
        assert_eq!(mean_photon_ratio(&a, &a).unwrap(), 1.0);
        let empty = set(vec![]);
        assert!(matches!(mean_photon_ratio(&empty, &a), Err(GbsError::InvalidInput(_))));
    }

    #[test]
    fn validation_catches_zero_and_cutoff() {
        assert!(set(vec![vec![1, 0, 2]]).validate().is_ok());
        assert!(set(vec![vec![0, 0, 0]]).validate().is_err());
        assert!(set(vec![vec![3, 0, 0]]).validate().is_err());
    }

    #[test]
    fn binning_preserves_totals() {
        let s = set(vec![vec![1, 0, 2], vec![0, 1, 0]]);
        let p = BinningPartition::parse("1,2|3", 3).unwrap();
        let b = s.binned(&p).unwrap();
        assert_eq!(b.patterns[0].0, vec![1, 2]);
        assert_eq!(b.n_cutoff, 4);
        for (x, y) in s.patterns.iter().zip(&b.patterns) {
            assert_eq!(x.total(), y.total());
        }
        assert!(b.validate().is_ok());
        assert!(b.binned(&p).is_err());
    }
}
