//! Pattern-recognition validation, output binning and cumulant correlators.

mod binning;
mod chisq;
mod correlator;
mod kmeans;
mod peak;

pub use binning::BinningPartition;
pub use chisq::{
    chi_square_from_counts, chi_square_test, sample_box_run, BoxSettings, ChiSquare, ChiSquareRun, Expectation,
};
pub use correlator::{combinations, correlator, gamma_deviation, set_partitions, CorrelationPoint, CorrelationReport};
pub use kmeans::{train_clusters, ClusterModel};
pub use peak::{fit_gaussian_peak, peak_density, PeakFit, DEFAULT_BINS};

use crate::error::Result;
use crate::samplers::SampleSet;

/// Sums photon counts over each subset of `partition`.
pub fn bin_patterns(samples: &SampleSet, partition: &BinningPartition) -> Result<SampleSet> {
    samples.binned(partition)
}
