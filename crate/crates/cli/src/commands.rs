use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gbs_core::gaussian::{apply_interferometer, haar_unitary, xp_to_q, Interferometer};
use gbs_core::oracle::{
    distinguishable_probabilities, enumerate_with, lossy_probabilities, structure_stats, EnumerationOptions,
    ProbabilityTable, StructureStats, DEFAULT_BUDGET,
};
use gbs_core::rng::derive_seed;
use gbs_core::samplers::{
    coherent_probabilities, distinguishable_states, ideal_state, sample_coherent, sample_distinguishable, sample_ideal, sample_lossy,
    sample_squashed, sample_thermal, squashed_covariance, thermal_probabilities, SampleSet,
};
use gbs_core::validation::{
    fit_gaussian_peak, gamma_deviation, sample_box_run, train_clusters, BinningPartition, BoxSettings,
};
use gbs_core::{Exec, GbsError, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelKind, Pipeline, Run};

/// Plot-ready result record shared by `enumerate`, `validate` and `report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub name: String,
    pub model: String,
    pub noise: f64,
    pub seed: u64,
    pub config_hash: String,
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub flags: BTreeMap<String, bool>,
    pub params: ExperimentConfig,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn budget() -> Result<u64> {
    match std::env::var("GBS_BUDGET") {
        Ok(v) => v.trim().parse().map_err(|_| GbsError::InvalidParameter(format!("GBS_BUDGET = {v:?} is not an integer"))),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

fn options() -> Result<EnumerationOptions> {
    Ok(EnumerationOptions { budget: budget()?, exec: Exec::Parallel })
}

pub fn load_unitary(path: &Path) -> Result<Interferometer> {
    Interferometer::from_json(&fs::read_to_string(path)?)
}

pub fn generate_unitary(m: usize, seed: u64, out: &Path) -> Result<()> {
    if m == 0 {
        return Err(GbsError::InvalidParameter("m must be at least 1".into()));
    }
    let itf = haar_unitary(m, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = create(out)?;
    writeln!(w, "{}", itf.to_json())?;
    w.flush()?;
    Ok(())
}

fn check_unitary(cfg: &ExperimentConfig, itf: &Interferometer) -> Result<()> {
    if itf.m() != cfg.spec.m {
        return Err(GbsError::InvalidInput(format!("unitary has {} modes, config needs {}", itf.m(), cfg.spec.m)));
    }
    Ok(())
}

fn draw(cfg: &ExperimentConfig, itf: &Interferometer, run: Run, n: usize, seed: u64) -> Result<SampleSet> {
    let s = &cfg.sampling;
    let spec = &cfg.spec;
    let eta = run.eta.unwrap_or(1.0);
    match run.model {
        ModelKind::Ideal => sample_ideal(spec, itf, n, s.n_cutoff, seed, Exec::Parallel),
        ModelKind::Loss => sample_lossy(spec, itf, eta, n, s.n_cutoff, seed, s.loss_method, Exec::Parallel),
        ModelKind::Distinguishable => {
            sample_distinguishable(spec, itf, eta, n, s.n_cutoff, seed, s.virtual_method, Exec::Parallel)
        }
        ModelKind::Thermal => sample_thermal(spec, itf, n, s.n_cutoff, seed, options()?),
        ModelKind::Coherent => sample_coherent(spec, itf, s.theta, n, s.n_cutoff, seed, Exec::Parallel),
        ModelKind::Squashed => sample_squashed(spec, itf, n, s.n_cutoff, seed, Exec::Parallel),
    }
}

fn write_samples(set: &SampleSet, path: &Path, hash: &str) -> Result<()> {
    let mut w = create(path)?;
    set.write_ndjson(&mut w, Some(hash))?;
    w.flush()?;
    Ok(())
}

/// Writes one sample file per run and, unless `test_only`, the ideal
/// `bona.ndjson` box and `train.ndjson` training set. Returns the paths.
pub fn sample(cfg: &ExperimentConfig, itf: &Interferometer, out: &Path, test_only: bool) -> Result<Vec<PathBuf>> {
    check_unitary(cfg, itf)?;
    fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let seed = cfg.sampling.seed;
    let mut written = Vec::new();
    if !test_only {
        let ideal = Run { model: ModelKind::Ideal, eta: None };
        let bona = draw(cfg, itf, ideal, cfg.sampling.n_samples, derive_seed(seed, "bona"))?;
        let path = out.join("bona.ndjson");
        write_samples(&bona, &path, &hash)?;
        written.push(path);
        if let Some(v) = cfg.validation.as_ref().filter(|v| v.pipeline == Pipeline::PatternRecognition) {
            let train = draw(cfg, itf, ideal, v.training_size, derive_seed(seed, "train"))?;
            let path = out.join("train.ndjson");
            write_samples(&train, &path, &hash)?;
            written.push(path);
        }
    }
    for run in cfg.runs() {
        let set = draw(cfg, itf, run, cfg.sampling.n_samples, derive_seed(seed, &run.stem()))?;
        let path = out.join(format!("{}.ndjson", run.stem()));
        write_samples(&set, &path, &hash)?;
        written.push(path);
    }
    Ok(written)
}

fn table_for(cfg: &ExperimentConfig, itf: &Interferometer, run: Run) -> Result<ProbabilityTable> {
    let opts = options()?;
    let cutoff = cfg.sampling.n_cutoff;
    let spec = &cfg.spec;
    match run.model {
        ModelKind::Ideal => enumerate_with(&ideal_state(spec, itf)?, cutoff, opts),
        ModelKind::Loss => {
            let ideal = enumerate_with(&ideal_state(spec, itf)?, cutoff, opts)?;
            lossy_probabilities(&ideal, run.eta.unwrap_or(1.0))
        }
        ModelKind::Distinguishable => {
            let (actual, virtuals) = distinguishable_states(spec, itf, run.eta.unwrap_or(1.0))?;
            let actual = enumerate_with(&actual, cutoff, opts)?;
            let virtuals =
                virtuals.iter().map(|v| enumerate_with(v, cutoff, opts)).collect::<Result<Vec<_>>>()?;
            distinguishable_probabilities(&actual, &virtuals, cutoff)
        }
        ModelKind::Thermal => thermal_probabilities(spec, itf, cutoff, opts),
        ModelKind::Squashed => {
            let state = apply_interferometer(&xp_to_q(&squashed_covariance(spec)?)?, itf)?;
            enumerate_with(&state, cutoff, opts)
        }
        ModelKind::Coherent => coherent_probabilities(spec, itf, cfg.sampling.theta, cutoff, opts),
    }
}

fn stats_values(prefix: &str, s: &StructureStats, values: &mut BTreeMap<String, f64>) {
    values.insert(format!("{prefix}top_k_mass"), s.top_k_mass);
    values.insert(format!("{prefix}mean_l2"), s.mean_l2);
    values.insert(format!("{prefix}short_tail_mass"), s.short_tail_mass);
    values.insert(format!("{prefix}long_tail_mass"), s.long_tail_mass);
}

/// Enumerates every run's table and writes it with its structure statistics.
pub fn enumerate(cfg: &ExperimentConfig, itf: &Interferometer, out: &Path, bins: Option<&str>) -> Result<Vec<PathBuf>> {
    check_unitary(cfg, itf)?;
    let e = cfg
        .enumeration
        .as_ref()
        .ok_or_else(|| GbsError::InvalidParameter(format!("config {} has no enumeration section", cfg.name)))?;
    let mut partitions = e
        .partitions
        .iter()
        .map(|p| BinningPartition::parse(p, cfg.spec.m))
        .collect::<Result<Vec<_>>>()?;
    if let Some(b) = bins {
        partitions.push(BinningPartition::parse(b, cfg.spec.m)?);
    }
    fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let mut written = Vec::new();
    for run in cfg.runs() {
        let table = table_for(cfg, itf, run)?;
        let stem = run.stem();
        let path = out.join(format!("{stem}_table.ndjson"));
        let mut w = create(&path)?;
        table.write_ndjson(&mut w, Some(&hash))?;
        w.flush()?;
        written.push(path);

        let mut values = BTreeMap::new();
        let stats = structure_stats(&table, e.top_k, e.short_thresh, e.long_thresh)?;
        stats_values("", &stats, &mut values);
        for (i, p) in partitions.iter().enumerate() {
            let binned = structure_stats(&table.binned(p)?, e.top_k, e.short_thresh, e.long_thresh)?;
            stats_values(&format!("p{}.", i + 1), &binned, &mut values);
        }
        values.insert("truncation_deficit".into(), table.truncation_deficit);
        let summary = Summary {
            kind: "structure".into(),
            name: stem.clone(),
            model: run.model.to_string(),
            noise: run.eta.unwrap_or(1.0),
            seed: cfg.sampling.seed,
            config_hash: hash.clone(),
            values,
            flags: BTreeMap::new(),
            params: cfg.clone(),
        };
        let path = out.join(format!("{stem}_stats.json"));
        write_json(&path, &summary)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_samples(path: &Path) -> Result<SampleSet> {
    let (set, _) = SampleSet::read_ndjson(BufReader::new(File::open(path)?))?;
    Ok(set)
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| "test".into(), |s| s.to_string_lossy().into_owned())
}

fn model_name(set: &SampleSet) -> String {
    serde_json::to_value(&set.model)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_owned))
        .unwrap_or_default()
}

pub struct ValidateArgs<'a> {
    pub bona: &'a Path,
    pub tests: &'a [PathBuf],
    pub train: Option<&'a Path>,
    pub out: &'a Path,
    pub bins: Option<&'a str>,
    pub pipeline: Option<Pipeline>,
}

/// Pattern-recognition (train, sample box, peak fit) or correlation
/// validation of every test file against the bona fide file.
pub fn validate(cfg: &ExperimentConfig, args: ValidateArgs<'_>) -> Result<Vec<PathBuf>> {
    let v = cfg.validation()?;
    let mut bona = read_samples(args.bona)?;
    let mut train = args.train.map(read_samples).transpose()?;
    let mut tests = args.tests.iter().map(|p| read_samples(p)).collect::<Result<Vec<_>>>()?;
    for set in train.iter().chain(&tests) {
        if set.m != bona.m || set.n_cutoff != bona.n_cutoff || set.partition != bona.partition {
            return Err(GbsError::InvalidInput(format!(
                "sample files disagree: m = {} / {}, n_cutoff = {} / {}",
                set.m, bona.m, set.n_cutoff, bona.n_cutoff
            )));
        }
    }
    if let Some(p) = cfg.partition(args.bins)? {
        bona = bona.binned(&p)?;
        train = train.map(|t| t.binned(&p)).transpose()?;
        tests = tests.iter().map(|t| t.binned(&p)).collect::<Result<_>>()?;
    }
    fs::create_dir_all(args.out)?;
    let hash = cfg.hash();
    let seed = cfg.sampling.seed;
    let mut written = Vec::new();
    let summary = |name: String, kind: &str, set: &SampleSet, values, flags| Summary {
        kind: kind.into(),
        name,
        model: model_name(set),
        noise: set.model.noise_parameter(),
        seed,
        config_hash: hash.clone(),
        values,
        flags,
        params: cfg.clone(),
    };
    match args.pipeline.unwrap_or(v.pipeline) {
        Pipeline::PatternRecognition => {
            let (train_patterns, box_patterns) = match &train {
                Some(t) => (&t.patterns[..], &bona.patterns[..]),
                None => {
                    if bona.len() <= v.training_size {
                        return Err(GbsError::InvalidParameter(format!(
                            "bona fide file has {} samples, training needs {} plus a box",
                            bona.len(),
                            v.training_size
                        )));
                    }
                    bona.patterns.split_at(v.training_size)
                }
            };
            let model = train_clusters(&train_patterns[..v.training_size.min(train_patterns.len())], v.k, seed, Exec::Parallel)?;
            let path = args.out.join("clusters.json");
            write_json(&path, &model)?;
            written.push(path);
            for (set, file) in tests.iter().zip(args.tests) {
                let stem = stem_of(file);
                let settings =
                    BoxSettings { repetitions: v.repetitions, draw_size: v.draw_size, seed, expectation: v.expectation };
                let run = sample_box_run(&model, box_patterns, &set.patterns, settings, Exec::Parallel)?;
                let path = args.out.join(format!("{stem}_chi2.csv"));
                let mut w = create(&path)?;
                run.write_csv(&mut w)?;
                w.flush()?;
                written.push(path);
                let fit = fit_gaussian_peak(&run.chi2_values, v.bins)?;
                let mut values = BTreeMap::from([
                    ("x_c".to_string(), fit.x_c),
                    ("sigma".to_string(), fit.sigma),
                    ("center_stderr".to_string(), fit.center_stderr),
                    ("amplitude".to_string(), fit.amplitude),
                    ("abandoned_fraction".to_string(), run.mean_abandoned()),
                ]);
                if fit.fit_residual.is_finite() {
                    values.insert("fit_residual".into(), fit.fit_residual);
                }
                let flags = BTreeMap::from([("fallback".to_string(), fit.fallback), ("degenerate".to_string(), fit.degenerate)]);
                let path = args.out.join(format!("{stem}_peak.json"));
                write_json(&path, &summary(stem, "peak", set, values, flags))?;
                written.push(path);
            }
        }
        Pipeline::Correlation => {
            for (set, file) in tests.iter().zip(args.tests) {
                let stem = stem_of(file);
                let mut values = BTreeMap::new();
                for &t in &v.orders {
                    let report = gamma_deviation(set, &bona, t, Exec::Parallel)?;
                    let path = args.out.join(format!("{stem}_corr_t{t}.csv"));
                    let mut w = create(&path)?;
                    report.write_csv(&mut w)?;
                    w.flush()?;
                    written.push(path);
                    values.insert(format!("gamma_t{t}"), report.gamma);
                }
                let path = args.out.join(format!("{stem}_corr.json"));
                write_json(&path, &summary(stem, "correlation", set, values, BTreeMap::new()))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Merges summary JSON files into one CSV sorted by kind, model and noise.
pub fn report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    if inputs.is_empty() {
        return Err(GbsError::InvalidParameter("report needs at least one input".into()));
    }
    let mut rows = Vec::with_capacity(inputs.len());
    for path in inputs {
        let text = fs::read_to_string(path)?;
        let s: Summary = serde_json::from_str(&text)
            .map_err(|e| GbsError::Format(format!("{} is not a result summary: {e}", path.display())))?;
        rows.push(s);
    }
    rows.sort_by(|a, b| {
        (&a.kind, &a.model).cmp(&(&b.kind, &b.model)).then(a.noise.total_cmp(&b.noise)).then(a.name.cmp(&b.name))
    });
    let keys: BTreeSet<&String> = rows.iter().flat_map(|r| r.values.keys()).collect();
    let flags: BTreeSet<&String> = rows.iter().flat_map(|r| r.flags.keys()).collect();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = create(out)?;
    let mut header = vec!["name", "kind", "model", "noise", "seed", "config_hash"];
    header.extend(keys.iter().map(|k| k.as_str()));
    header.extend(flags.iter().map(|k| k.as_str()));
    writeln!(w, "{}", header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(","))?;
    for r in &rows {
        let mut fields =
            vec![csv_field(&r.name), csv_field(&r.kind), csv_field(&r.model), r.noise.to_string(), r.seed.to_string(), r.config_hash.clone()];
        fields.extend(keys.iter().map(|k| r.values.get(*k).map_or_else(String::new, f64::to_string)));
        fields.extend(flags.iter().map(|k| r.flags.get(*k).map_or_else(String::new, bool::to_string)));
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}
