use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ProbabilityTable, TableHeader};
use crate::error::{GbsError, Result};
use crate::pattern::OutputPattern;

#[derive(Serialize, Deserialize)]
struct Record {
    s: OutputPattern,
    p: f64,
}

impl ProbabilityTable {
    /// Header line followed by one `{"s":[..],"p":..}` line per pattern, in
    /// lexicographic pattern order.
    pub fn write_ndjson<W: Write>(&self, mut w: W, config_hash: Option<&str>) -> Result<()> {
        let mut header = self.header();
        header.config_hash = config_hash.map(str::to_owned);
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for (s, &p) in &self.entries {
            serde_json::to_writer(&mut w, &Record { s: s.clone(), p })?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<(Self, TableHeader)> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| GbsError::Format("empty table file".into()))??;
        let header: TableHeader = serde_json::from_str(&first)?;
        let mut entries = BTreeMap::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)?;
            if rec.s.m() != header.m {
                return Err(GbsError::Format(format!("record {:?} does not have {} modes", rec.s.0, header.m)));
            }
            entries.insert(rec.s, rec.p);
        }
        if entries.len() != header.n_entries {
            return Err(GbsError::Format(format!("header announces {} entries, found {}", header.n_entries, entries.len())));
        }
        let table = ProbabilityTable {
            m: header.m,
            n_cutoff: header.n_cutoff,
            entries,
            zero_excluded: header.zero_excluded,
            normalized: header.normalized,
            truncation_deficit: header.truncation_deficit,
        };
        Ok((table, header))
    }
}
