//! Evaluation harness: block-wise localization of a synthesized scenario,
//! MAE/SDE scoring against the ground truth, and runtime comparison.
//!
//! A *block* is `block_frames` consecutive STFT frames whose snapshots are
//! averaged into one covariance per bin; consecutive blocks start
//! `block_hop` frames apart. A block is scored only when the same set of
//! sources is active over its whole time span; blocks with no active source
//! or with an onset/offset inside them are skipped. The model order Q given
//! to every estimator is the number of sources active in the block.
//!
//! Errors are assigned by the permutation of estimates minimising the total
//! absolute error. MAE is the mean absolute error over all sources and
//! blocks; SDE is the population standard deviation of the signed errors
//! (estimate − truth). Wall-clock times cover estimation only: the shared
//! STFT and covariance work is excluded.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::{css_localize, hist_esprit, CssConfig, HistogramConfig};
use crate::error::{DoaError, Result};
use crate::esprit::{wideband_esprit_multi_with, wideband_esprit_single, AccumulationMode, Solver};
use crate::geometry::ArrayGeometry;
use crate::spectral::{estimate_covariances_for_bins, plan_band, stft, BandPlan, BinCovariance, StftConfig};
use crate::subspace::WidebandOptions;
use crate::synth::{synthesize_scenario, GroundTruth, MultichannelSignal, ScenarioConfig};

/// Localization methods known to the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    ProposedSingle,
    ProposedMultiBatch,
    ProposedMultiIterative,
    HistEsprit,
    Css,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::ProposedSingle,
        Algorithm::ProposedMultiBatch,
        Algorithm::ProposedMultiIterative,
        Algorithm::HistEsprit,
        Algorithm::Css,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ProposedSingle => "proposed-single",
            Algorithm::ProposedMultiBatch => "proposed-multi-batch",
            Algorithm::ProposedMultiIterative => "proposed-multi-iterative",
            Algorithm::HistEsprit => "hist-esprit",
            Algorithm::Css => "css",
        }
    }

    /// Whether the method can localize `q` simultaneous sources.
    pub fn supports(self, q: usize) -> bool {
        self != Algorithm::ProposedSingle || q == 1
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
            DoaError::domain(format!("unknown algorithm '{s}'; valid names: {}", names.join(", ")))
        })
    }
}

/// Tuning shared by all runs of an experiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlgorithmSettings {
    pub solver: Solver,
    pub wideband: WidebandOptions,
    pub histogram: HistogramConfig,
    pub css: CssConfig,
}

/// Runs one method on one block's bin covariances. Baselines that find fewer
/// than `q` peaks return what they found.
pub fn estimate(
    algorithm: Algorithm,
    covs: &[BinCovariance],
    q: usize,
    geom: &ArrayGeometry,
    settings: &AlgorithmSettings,
) -> Result<Vec<f64>> {
    if !algorithm.supports(q) {
        return Err(DoaError::domain(format!("{algorithm} handles a single source, got Q = {q}")));
    }
    let f_ref = covs.iter().map(|c| c.frequency).fold(0.0, f64::max);
    let multi = |mode| wideband_esprit_multi_with(covs, q, geom, mode, settings.solver, settings.wideband);
    Ok(match algorithm {
        Algorithm::ProposedSingle => wideband_esprit_single(covs, geom, f_ref, settings.solver)?.doas,
        Algorithm::ProposedMultiBatch => multi(AccumulationMode::Batch)?.doas,
        Algorithm::ProposedMultiIterative => multi(AccumulationMode::Iterative)?.doas,
        Algorithm::HistEsprit => hist_esprit(covs, q, geom, &settings.histogram)?.doas,
        Algorithm::Css => css_localize(covs, q, geom, &settings.css)?.doas,
    })
}

/// Absolute errors in truth order after the optimal assignment.
pub fn score_block(estimates: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    Ok(signed_errors(estimates, truth)?.into_iter().map(f64::abs).collect())
}

/// Signed errors (estimate − truth) in truth order under the assignment
/// minimising the total absolute error (exhaustive search; ties keep the
/// lexicographically first permutation).
pub fn signed_errors(estimates: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    if estimates.len() != truth.len() {
        return Err(DoaError::domain(format!(
            "{} estimates for {} true directions",
            estimates.len(),
            truth.len()
        )));
    }
    if truth.len() > 6 {
        return Err(DoaError::domain("exhaustive assignment supports at most 6 sources"));
    }
    let mut perm: Vec<usize> = (0..truth.len()).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let cost: f64 = perm.iter().zip(truth).map(|(&e, t)| (estimates[e] - t).abs()).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, perm.clone()));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (_, perm) = best.expect("at least the identity permutation");
    Ok(perm.iter().zip(truth).map(|(&e, t)| estimates[e] - t).collect())
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Pads a short estimate list to `q` entries by repeating its first entry
/// (or 0° if empty) so that every scored block contributes Q errors.
pub fn complete_estimates(mut doas: Vec<f64>, q: usize) -> Vec<f64> {
    let fill = doas.first().copied().unwrap_or(0.0);
    doas.resize(q.max(doas.len()), fill);
    doas.truncate(q);
    doas
}

/// How the STFT frames are grouped into estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub frames: usize,
    pub hop: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self { frames: 16, hop: 8 }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.hop == 0 {
            return Err(DoaError::domain("block frames and hop must be at least 1"));
        }
        Ok(())
    }

    /// Frame ranges of all complete blocks.
    pub fn ranges(&self, num_frames: usize) -> Vec<std::ops::Range<usize>> {
        (0..)
            .map(|k| k * self.hop)
            .take_while(|&start| start + self.frames <= num_frames)
            .map(|start| start..start + self.frames)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockResult {
    pub block_index: usize,
    /// Seconds, first sample of the first frame.
    pub start: f64,
    /// Seconds, one past the last sample of the last frame.
    pub end: f64,
    pub estimates: Vec<f64>,
    /// Sorted.
    pub truth: Vec<f64>,
    /// Absolute errors in truth order.
    pub per_source_error: Vec<f64>,
    /// Estimate − truth in truth order.
    pub signed_error: Vec<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub scenario: String,
    pub mae: f64,
    pub sde: f64,
    pub blocks: Vec<BlockResult>,
    pub total_time: f64,
}

impl RunReport {
    pub fn from_blocks(algorithm: Algorithm, scenario: &str, blocks: Vec<BlockResult>) -> Self {
        let (mae, sde) = error_statistics(&blocks);
        let total_time = blocks.iter().map(|b| b.wall_time).sum();
        Self { algorithm, scenario: scenario.to_string(), mae, sde, blocks, total_time }
    }
}

/// MAE and population SDE of the signed errors over all blocks; NaN when
/// nothing was scored.
pub fn error_statistics(blocks: &[BlockResult]) -> (f64, f64) {
    let signed: Vec<f64> = blocks.iter().flat_map(|b| b.signed_error.iter().copied()).collect();
    if signed.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = signed.len() as f64;
    let mae = signed.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mean = signed.iter().sum::<f64>() / n;
    let var = signed.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    (mae, var.sqrt())
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub stft: StftConfig,
    /// Requested analysis band, Hz; the top is capped at the aliasing limit.
    pub band: (f64, f64),
    pub blocks: BlockConfig,
    pub algorithms: Vec<Algorithm>,
    pub settings: AlgorithmSettings,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.stft.validate()?;
        self.blocks.validate()?;
        if self.stft.sample_rate != self.scenario.sample_rate {
            return Err(DoaError::domain(format!(
                "STFT rate {} Hz differs from scenario rate {} Hz",
                self.stft.sample_rate, self.scenario.sample_rate
            )));
        }
        if self.algorithms.is_empty() {
            return Err(DoaError::domain("no algorithms selected"));
        }
        self.settings.histogram.validate()?;
        self.settings.css.validate()?;
        let q = self.scenario.max_simultaneous_sources();
        if let Some(a) = self.algorithms.iter().find(|a| !a.supports(q)) {
            return Err(DoaError::domain(format!("{a} cannot handle the {q} simultaneous sources of this scenario")));
        }
        Ok(())
    }
}

/// One block's covariances and the truth active over it.
#[derive(Debug, Clone)]
pub struct PreparedBlock {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub truth: Option<Vec<f64>>,
    pub covariances: Vec<BinCovariance>,
}

/// Block covariances of a multichannel signal over the planned band.
pub fn prepare_blocks(
    signal: &MultichannelSignal,
    truth: Option<&GroundTruth>,
    stft_cfg: &StftConfig,
    plan: &BandPlan,
    blocks: &BlockConfig,
) -> Result<Vec<PreparedBlock>> {
    blocks.validate()?;
    let spec = stft(signal, stft_cfg)?;
    let rate = stft_cfg.sample_rate;
    blocks
        .ranges(spec.num_frames())
        .into_iter()
        .enumerate()
        .map(|(index, frames)| {
            let start = stft_cfg.frame_start(frames.start);
            let end = stft_cfg.frame_start(frames.end - 1) + stft_cfg.frame_length as f64 / rate;
            let covariances = estimate_covariances_for_bins(&spec, frames, &plan.bins)?;
            let truth = truth.and_then(|t| t.active_over(start, end));
            Ok(PreparedBlock { index, start, end, truth, covariances })
        })
        .collect()
}

/// Synthesizes the scenario, localizes every scorable block with every
/// configured method and scores the results. All methods see the same
/// covariances; only their estimation calls are timed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    let scene = synthesize_scenario(&cfg.scenario)?;
    let geom = &cfg.scenario.geometry;
    let plan = plan_band(geom, &cfg.stft, cfg.band.0, cfg.band.1)?;
    let prepared = prepare_blocks(&scene.signal, Some(&scene.truth), &cfg.stft, &plan, &cfg.blocks)?;
    let mut results: Vec<Vec<BlockResult>> = vec![Vec::new(); cfg.algorithms.len()];
    for block in &prepared {
        let Some(truth) = &block.truth else { continue };
        for (slot, &alg) in cfg.algorithms.iter().enumerate() {
            let started = Instant::now();
            let raw = estimate(alg, &block.covariances, truth.len(), geom, &cfg.settings)?;
            let wall_time = started.elapsed().as_secs_f64();
            let estimates = complete_estimates(raw, truth.len());
            let signed_error = signed_errors(&estimates, truth)?;
            results[slot].push(BlockResult {
                block_index: block.index,
                start: block.start,
                end: block.end,
                per_source_error: signed_error.iter().map(|e| e.abs()).collect(),
                signed_error,
                estimates,
                truth: truth.clone(),
                wall_time,
            });
        }
    }
    Ok(cfg
        .algorithms
        .iter()
        .zip(results)
        .map(|(&alg, blocks)| RunReport::from_blocks(alg, &cfg.name, blocks))
        .collect())
}

/// One localized block of an unlabelled recording.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub block_index: usize,
    pub start: f64,
    pub end: f64,
    pub doas: Vec<f64>,
}

/// Localizes `q` sources in every block of a recording.
pub fn localize_signal(
    signal: &MultichannelSignal,
    geom: &ArrayGeometry,
    stft_cfg: &StftConfig,
    band: (f64, f64),
    blocks: &BlockConfig,
    algorithm: Algorithm,
    q: usize,
    settings: &AlgorithmSettings,
) -> Result<(Vec<TraceRow>, BandPlan)> {
    if signal.num_channels() != geom.num_sensors() {
        return Err(DoaError::domain(format!(
            "channel count mismatch: expected {} channels, found {}",
            geom.num_sensors(),
            signal.num_channels()
        )));
    }
    geom.check_source_count(q)?;
    let plan = plan_band(geom, stft_cfg, band.0, band.1)?;
    let prepared = prepare_blocks(signal, None, stft_cfg, &plan, blocks)?;
    let rows = prepared
        .iter()
        .map(|b| {
            let doas = complete_estimates(estimate(algorithm, &b.covariances, q, geom, settings)?, q);
            Ok(TraceRow { block_index: b.index, start: b.start, end: b.end, doas })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, plan))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRow {
    pub algorithm: Algorithm,
    pub total_time: f64,
    /// Percent faster than hist-ESPRIT (negative when slower); `None` without
    /// a hist-ESPRIT report.
    pub faster_than_hist_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeTable {
    pub rows: Vec<RuntimeRow>,
}

impl RuntimeTable {
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<26} {:>12} {:>16}\n", "algorithm", "time_s", "vs_hist_esprit");
        for row in &self.rows {
            let rel = row.faster_than_hist_percent.map_or_else(|| "-".to_string(), |p| format!("{p:+.1}%"));
            let _ = writeln!(out, "{:<26} {:>12.4} {:>16}", row.algorithm.name(), row.total_time, rel);
        }
        out
    }

    pub fn time_of(&self, algorithm: Algorithm) -> Option<f64> {
        self.rows.iter().find(|r| r.algorithm == algorithm).map(|r| r.total_time)
    }
}

/// Total estimation time per method and its speed-up relative to
/// hist-ESPRIT. All reports must cover the same scenario and block count.
pub fn compare_runtime(reports: &[RunReport]) -> Result<RuntimeTable> {
    let first = reports.first().ok_or_else(|| DoaError::domain("no reports to compare"))?;
    for r in reports {
        if r.blocks.len() != first.blocks.len() || r.scenario != first.scenario {
            return Err(DoaError::domain(format!(
                "reports differ in scenario or block count ({} blocks of '{}' vs {} of '{}')",
                r.blocks.len(),
                r.scenario,
                first.blocks.len(),
                first.scenario
            )));
        }
    }
    let hist = reports.iter().find(|r| r.algorithm == Algorithm::HistEsprit).map(|r| r.total_time);
    let rows = reports
        .iter()
        .map(|r| RuntimeRow {
            algorithm: r.algorithm,
            total_time: r.total_time,
            faster_than_hist_percent: hist.map(|h| if h > 0.0 { 100.0 * (h - r.total_time) / h } else { 0.0 }),
        })
        .collect();
    Ok(RuntimeTable { rows })
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Header of [`blocks_csv`].
pub const BLOCKS_CSV_HEADER: &str =
    "algorithm,scenario,block,start_s,end_s,truth_deg,estimate_deg,abs_error_deg,signed_error_deg";

/// One row per scored block. Multi-source fields are `;`-separated in truth
/// order; numbers use the shortest round-trip representation. Timings are
/// deliberately absent so that reruns are byte-identical.
pub fn blocks_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(BLOCKS_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for b in &r.blocks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.algorithm,
                r.scenario,
                b.block_index,
                b.start,
                b.end,
                join(&b.truth),
                join(&b.estimates),
                join(&b.per_source_error),
                join(&b.signed_error)
            );
        }
    }
    out
}

/// MAE/SDE table, one row per method.
pub fn summary_table(reports: &[RunReport]) -> String {
    let scenario = reports.first().map_or("", |r| r.scenario.as_str());
    let mut out = format!("scenario: {scenario}\n{:<26} {:>8} {:>8} {:>7}\n", "algorithm", "MAE", "SDE", "blocks");
    for r in reports {
        let _ = writeln!(out, "{:<26} {:>8.2} {:>8.2} {:>7}", r.algorithm.name(), r.mae, r.sde, r.blocks.len());
    }
    out
}

/// Plot-ready error-versus-time trace: one row per block, source and method.
pub fn trace_csv(reports: &[RunReport]) -> String {
    let mut out = String::from("time_s,algorithm,source,truth_deg,estimate_deg,signed_error_deg\n");
    for r in reports {
        for b in &r.blocks {
            let mid = 0.5 * (b.start + b.end);
            // Estimates listed in the assignment order used for scoring.
            for (k, (&t, &e)) in b.truth.iter().zip(&b.signed_error).enumerate() {
                let _ = writeln!(out, "{},{},{},{},{},{}", mid, r.algorithm, k, t, t + e, e);
            }
        }
    }
    out
}

/// CSV of a localized recording: `block,start_s,end_s,doa_1..doa_Q`.
pub fn localization_csv(rows: &[TraceRow], q: usize) -> String {
    let mut out = String::from("block,start_s,end_s");
    for k in 1..=q {
        let _ = write!(out, ",doa_{k}_deg");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{},{},{}", row.block_index, row.start, row.end);
        for d in &row.doas {
            let _ = write!(out, ",{d}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn score_examples() {
        assert_eq!(score_block(&[44.0, -46.0], &[45.0, -45.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(score_block(&[-45.0, 45.0], &[45.0, -45.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(score_block(&[0.0, 0.0], &[45.0, -45.0]).unwrap(), vec![45.0, 45.0]);
        assert!(score_block(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn signed_errors_follow_the_assignment() {
        assert_eq!(signed_errors(&[-44.0, 47.0], &[45.0, -45.0]).unwrap(), vec![2.0, 1.0]);
        assert_eq!(signed_errors(&[3.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn statistics_are_population_moments() {
        let block = |signed: Vec<f64>| BlockResult {
            block_index: 0,
            start: 0.0,
            end: 1.0,
            estimates: vec![],
            truth: vec![],
            per_source_error: signed.iter().map(|e: &f64| e.abs()).collect(),
            signed_error: signed,
            wall_time: 0.5,
        };
        let blocks = vec![block(vec![1.0, -1.0]), block(vec![3.0])];
        let (mae, sde) = error_statistics(&blocks);
        assert!((mae - 5.0 / 3.0).abs() < 1e-12);
        let mean = 1.0;
        let var = ((0.0f64).powi(2) + (-2.0f64).powi(2) + (2.0f64).powi(2)) / 3.0;
        assert!((sde - var.sqrt()).abs() < 1e-12, "{sde} vs mean {mean}");
        let report = RunReport::from_blocks(Algorithm::Css, "x", blocks);
        assert_eq!(report.total_time, 1.0);
        assert!(error_statistics(&[]).0.is_nan());
    }

    #[test]
    fn completion_pads_and_truncates() {
        assert_eq!(complete_estimates(vec![], 2), vec![0.0, 0.0]);
        assert_eq!(complete_estimates(vec![12.0], 2), vec![12.0, 12.0]);
        assert_eq!(complete_estimates(vec![1.0, 2.0, 3.0], 2), vec![1.0, 2.0]);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        let err = "hist-espirt".parse::<Algorithm>().unwrap_err().to_string();
        assert!(err.contains("hist-esprit") && err.contains("proposed-multi-batch"), "{err}");
    }

    #[test]
    fn block_ranges() {
        let cfg = BlockConfig { frames: 4, hop: 2 };
        assert_eq!(cfg.ranges(9), vec![0..4, 2..6, 4..8]);
        assert!(BlockConfig { frames: 0, hop: 1 }.validate().is_err());
    }

    fn report(alg: Algorithm, times: &[f64]) -> RunReport {
        let blocks = times
            .iter()
            .enumerate()
            .map(|(i, &t)| BlockResult {
                block_index: i,
                start: 0.0,
                end: 0.0,
                estimates: vec![0.0],
                truth: vec![0.0],
                per_source_error: vec![0.0],
                signed_error: vec![0.0],
                wall_time: t,
            })
            .collect();
        RunReport::from_blocks(alg, "s", blocks)
    }

    #[test]
    fn runtime_table_relative_to_hist() {
        let same = compare_runtime(&[report(Algorithm::HistEsprit, &[1.0, 1.0]), report(Algorithm::Css, &[1.0, 1.0])]).unwrap();
        assert!(same.rows.iter().all(|r| r.faster_than_hist_percent == Some(0.0)));
        let t = compare_runtime(&[
            report(Algorithm::ProposedMultiBatch, &[0.25, 0.5]),
            report(Algorithm::HistEsprit, &[0.5, 0.5]),
            report(Algorithm::Css, &[0.5, 0.4]),
        ])
        .unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!((t.rows[0].faster_than_hist_percent.unwrap() - 25.0).abs() < 1e-12);
        assert!((t.rows[2].faster_than_hist_percent.unwrap() - 10.0).abs() < 1e-9);
        assert!(t.to_text().contains("css"));
        assert!(compare_runtime(&[report(Algorithm::Css, &[1.0]), report(Algorithm::HistEsprit, &[1.0, 1.0])]).is_err());
    }

    #[test]
    fn csv_reproduces_statistics() {
        let mut r = report(Algorithm::HistEsprit, &[0.1]);
        r.blocks[0].truth = vec![-45.0, 45.0];
        r.blocks[0].estimates = vec![-44.3, 46.1];
        r.blocks[0].signed_error = vec![0.7000000000000028, 1.0999999999999943];
        r.blocks[0].per_source_error = r.blocks[0].signed_error.clone();
        let r = RunReport::from_blocks(r.algorithm, "s", r.blocks);
        let csv = blocks_csv(std::slice::from_ref(&r));
        let row = csv.lines().nth(1).unwrap();
        let signed: Vec<f64> = row.rsplit(',').next().unwrap().split(';').map(|v| v.parse().unwrap()).collect();
        assert_eq!(signed, r.blocks[0].signed_error);
        assert!(!csv.contains("0.1,"), "timings must not appear");
        assert!(trace_csv(&[r]).lines().count() == 3);
    }

    proptest! {
        #[test]
        fn scoring_is_symmetric_under_joint_permutation(
            est in proptest::collection::vec(-90.0f64..90.0, 3),
            truth in proptest::collection::vec(-90.0f64..90.0, 3),
            shift in 0usize..3
        ) {
            let errors = score_block(&est, &truth).unwrap();
            let mut e2 = est.clone();
            let mut t2 = truth.clone();
            e2.rotate_left(shift);
            t2.rotate_left(shift);
            let mut rotated = score_block(&e2, &t2).unwrap();
            rotated.rotate_right(shift);
            let total: f64 = errors.iter().sum();
            prop_assert!((total - rotated.iter().sum::<f64>()).abs() < 1e-9);
            prop_assert!(errors.iter().all(|&e| e >= 0.0));
            // Optimal assignment never does worse than the identity pairing.
            let identity: f64 = est.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum();
            prop_assert!(total <= identity + 1e-9);
        }
    }
}
