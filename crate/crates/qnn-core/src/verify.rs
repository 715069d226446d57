//! The verification harness: seeded reproduction of the compression and
//! optimization guarantees on the built-in benchmark quivers, reported as
//! named pass/fail checks.

use serde::Serialize;

use crate::compress::{
    compress_change_of_basis, feedforward_equality, qr_compress, qr_compress_rank_aware,
    CompressError, CompressionResult,
};
use crate::generate::{random_batch, random_network, ActivationKind, GenerateError, QuiverPreset};
use crate::network::{NetworkError, QuiverNetwork};
use crate::optim::{verify_equivalence, Cost, GdConfig, OptimError};
use crate::quiver::reduced_dimension_vector;
use crate::quiverrep::{verify_corollary, RepError};
use crate::rng::{trial_seeds, SplitMix64, Xoshiro256PlusPlus};

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Rep(#[from] RepError),
}

/// Outcome of one named check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub deviation: f64,
    pub threshold: f64,
    pub pass: bool,
    pub trials: usize,
    pub seed: u64,
}

impl CheckResult {
    fn new(name: String, deviation: f64, threshold: f64, trials: usize, seed: u64) -> Self {
        Self {
            name,
            deviation,
            threshold,
            pass: deviation < threshold,
            trials,
            seed,
        }
    }
}

/// Full report; serializes to JSON for the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub timestamp_unix: u64,
    pub checks: Vec<CheckResult>,
    pub overall_pass: bool,
}

impl VerifyReport {
    fn from_checks(seed: u64, checks: Vec<CheckResult>) -> Self {
        let overall_pass = checks.iter().all(|c| c.pass);
        let timestamp_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            seed,
            timestamp_unix,
            checks,
            overall_pass,
        }
    }
}

/// Which groups of checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckSet {
    Lossless,
    Pgd,
    CorollaryC,
    All,
}

impl CheckSet {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "lossless" => Some(CheckSet::Lossless),
            "pgd" => Some(CheckSet::Pgd),
            "corollary-c" => Some(CheckSet::CorollaryC),
            "all" => Some(CheckSet::All),
            _ => None,
        }
    }
}

/// Verification knobs; `seed` drives every random draw in the run.
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    pub trials: usize,
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 10,
            steps: 5,
            learning_rate: 0.01,
        }
    }
}

const INPUTS_PER_TRIAL: usize = 10;
const BATCH_SAMPLES: usize = 5;

const LOSSLESS_THRESHOLD: f64 = 1e-6;
const PGD_GD_THRESHOLD: f64 = 1e-5;
const PGD_REDUCTION_THRESHOLD: f64 = 1e-6;
const PGD_EXTENDED_THRESHOLD: f64 = 1e-4;

fn corollary_threshold(step: usize) -> f64 {
    match step {
        1 => 1e-8,
        2 | 3 => 1e-6,
        _ => 1e-4,
    }
}

/// Runs the requested check set and assembles the report.
pub fn run(set: CheckSet, options: &VerifyOptions) -> Result<VerifyReport, VerifyError> {
    let mut checks = Vec::new();
    if matches!(set, CheckSet::Lossless | CheckSet::All) {
        lossless_checks(options, &mut checks)?;
    }
    if matches!(set, CheckSet::Pgd | CheckSet::All) {
        pgd_checks(options, &mut checks)?;
    }
    if matches!(set, CheckSet::CorollaryC | CheckSet::All) {
        corollary_checks(options, &mut checks)?;
    }
    Ok(VerifyReport::from_checks(options.seed, checks))
}

fn check_stream(options: &VerifyOptions) -> SplitMix64 {
    SplitMix64::new(options.seed)
}

type Compressor = fn(&QuiverNetwork) -> Result<CompressionResult, CompressError>;

fn compress_qr(net: &QuiverNetwork) -> Result<CompressionResult, CompressError> {
    qr_compress(net)
}

fn compress_rank(net: &QuiverNetwork) -> Result<CompressionResult, CompressError> {
    qr_compress_rank_aware(net, None, None)
}

fn compress_basis(net: &QuiverNetwork) -> Result<CompressionResult, CompressError> {
    compress_change_of_basis(net, None)
}

/// Losslessness across the three presets: reduced dimensions must match
/// the expected vectors exactly, and each compression algorithm must
/// preserve the feedforward function on random models.
fn lossless_checks(
    options: &VerifyOptions,
    checks: &mut Vec<CheckResult>,
) -> Result<(), VerifyError> {
    let mut stream = check_stream(options);

    for preset in QuiverPreset::ALL {
        let quiver = preset.quiver();
        let dims = preset.dims(&preset.default_dims())?;
        let red = reduced_dimension_vector(&quiver, &dims);
        let expected: Vec<usize> = match preset {
            QuiverPreset::Fig6Left => vec![2, 3, 6, 2, 1],
            QuiverPreset::Fig6Middle => vec![1, 2, 4, 2, 6, 1],
            QuiverPreset::Fig6Right => vec![2, 3, 3, 7, 2, 1],
        };
        let deviation = red
            .as_slice()
            .iter()
            .zip(&expected)
            .map(|(&a, &b)| a.abs_diff(b) as f64)
            .fold(0.0, f64::max);
        checks.push(CheckResult::new(
            format!("reduced-dims/{}", preset.name()),
            deviation,
            0.5,
            1,
            options.seed,
        ));
    }

    let algorithms: [(&str, Compressor); 3] = [
        ("qr", compress_qr),
        ("rank", compress_rank),
        ("basis", compress_basis),
    ];
    let activations = [
        ActivationKind::StepRelu,
        ActivationKind::Squashing,
        ActivationKind::ShiftedNorm,
    ];

    for preset in QuiverPreset::ALL {
        for (alg_name, compressor) in &algorithms {
            for kind in &activations {
                // All algorithms run with step-relu; the smooth and the
                // non-radial families are exercised through the QR pass.
                if *alg_name != "qr" && !matches!(kind, ActivationKind::StepRelu) {
                    continue;
                }
                let check_seed = stream.next_u64();
                let deviation =
                    lossless_deviation(preset, *compressor, *kind, check_seed, options.trials)?;
                checks.push(CheckResult::new(
                    format!("lossless/{}/{}/{}", preset.name(), alg_name, kind.name()),
                    deviation,
                    LOSSLESS_THRESHOLD,
                    options.trials,
                    check_seed,
                ));
            }
        }
    }
    Ok(())
}

fn lossless_deviation(
    preset: QuiverPreset,
    compressor: Compressor,
    kind: ActivationKind,
    check_seed: u64,
    trials: usize,
) -> Result<f64, VerifyError> {
    let quiver = preset.quiver();
    let dims = preset.dims(&preset.default_dims())?;
    let seeds = trial_seeds(check_seed, trials);
    let deviations = crate::par::try_map(&seeds, |&trial_seed| -> Result<f64, VerifyError> {
        let mut rng = Xoshiro256PlusPlus::from_seed(trial_seed);
        let net = random_network(&quiver, &dims, kind, &mut rng)?;
        let compressed = compressor(&net)?;
        let input_seed = rng.next_u64();
        Ok(feedforward_equality(
            &net,
            &compressed.reduced,
            INPUTS_PER_TRIAL,
            input_seed,
        )?)
    })?;
    Ok(deviations.into_iter().fold(0.0, f64::max))
}

/// Compression/training equivalence: one gradient-descent step (and an
/// extended run) must satisfy both equalities on every preset.
fn pgd_checks(options: &VerifyOptions, checks: &mut Vec<CheckResult>) -> Result<(), VerifyError> {
    let mut stream = check_stream(options);
    for preset in QuiverPreset::ALL {
        for kind in [ActivationKind::StepRelu, ActivationKind::Squashing] {
            let check_seed = stream.next_u64();
            // Step-relu descent is numerically divergent past a few steps
            // (unbounded features), so its check stops at one step; the
            // extended drift baseline runs on the bounded smooth family.
            let extended_steps = match kind {
                ActivationKind::Squashing => options.steps.max(1),
                _ => 1,
            };
            let (one, extended) =
                pgd_deviations(preset, kind, check_seed, options, extended_steps)?;
            checks.push(CheckResult::new(
                format!("pgd/{}/{}/gd-conjugation/k1", preset.name(), kind.name()),
                one.0,
                PGD_GD_THRESHOLD,
                options.trials,
                check_seed,
            ));
            checks.push(CheckResult::new(
                format!("pgd/{}/{}/pgd-reduction/k1", preset.name(), kind.name()),
                one.1,
                PGD_REDUCTION_THRESHOLD,
                options.trials,
                check_seed,
            ));
            if extended_steps > 1 {
                checks.push(CheckResult::new(
                    format!(
                        "pgd/{}/{}/gd-conjugation/k{}",
                        preset.name(),
                        kind.name(),
                        extended_steps
                    ),
                    extended.0,
                    PGD_EXTENDED_THRESHOLD,
                    options.trials,
                    check_seed,
                ));
                checks.push(CheckResult::new(
                    format!(
                        "pgd/{}/{}/pgd-reduction/k{}",
                        preset.name(),
                        kind.name(),
                        extended_steps
                    ),
                    extended.1,
                    PGD_EXTENDED_THRESHOLD,
                    options.trials,
                    check_seed,
                ));
            }
        }
    }
    Ok(())
}

/// (gd-conjugation, pgd-reduction) deviation pair.
type DeviationPair = (f64, f64);

fn pgd_deviations(
    preset: QuiverPreset,
    kind: ActivationKind,
    check_seed: u64,
    options: &VerifyOptions,
    steps: usize,
) -> Result<(DeviationPair, DeviationPair), VerifyError> {
    let quiver = preset.quiver();
    let dims = preset.dims(&preset.default_dims())?;
    let seeds = trial_seeds(check_seed, options.trials);
    let config = GdConfig::new(options.learning_rate, steps, Cost::SquaredError);

    let per_trial = crate::par::try_map(&seeds, |&trial_seed| -> Result<_, VerifyError> {
        let mut rng = Xoshiro256PlusPlus::from_seed(trial_seed);
        let net = random_network(&quiver, &dims, kind, &mut rng)?;
        let batch = random_batch(net.input_dim(), net.output_dim(), BATCH_SAMPLES, &mut rng)?;
        let report = verify_equivalence(&net, &batch, &config)?;
        let first = &report.steps[0];
        Ok((
            (first.gd_conjugation, first.pgd_reduction),
            (report.max_gd_conjugation(), report.max_pgd_reduction()),
        ))
    })?;

    let mut one = (0.0f64, 0.0f64);
    let mut extended = (0.0f64, 0.0f64);
    for ((a1, b1), (ak, bk)) in per_trial {
        one.0 = one.0.max(a1);
        one.1 = one.1.max(b1);
        extended.0 = extended.0.max(ak);
        extended.1 = extended.1.max(bk);
    }
    Ok((one, extended))
}

/// Gradient descent commutes with the representation QR factorization.
fn corollary_checks(
    options: &VerifyOptions,
    checks: &mut Vec<CheckResult>,
) -> Result<(), VerifyError> {
    let mut stream = check_stream(options);
    let steps = options.steps.clamp(1, 3);
    for preset in QuiverPreset::ALL {
        let check_seed = stream.next_u64();
        let quiver = preset.quiver();
        let dims = preset.dims(&preset.default_dims())?;
        let seeds = trial_seeds(check_seed, options.trials);
        let config = GdConfig::new(options.learning_rate, steps, Cost::SquaredError);

        let per_trial = crate::par::try_map(&seeds, |&trial_seed| -> Result<_, VerifyError> {
            let mut rng = Xoshiro256PlusPlus::from_seed(trial_seed);
            let net = random_network(&quiver, &dims, ActivationKind::Squashing, &mut rng)?;
            let batch = random_batch(net.input_dim(), net.output_dim(), BATCH_SAMPLES, &mut rng)?;
            let report = verify_corollary(&net, &batch, &config)?;
            Ok(report
                .steps
                .iter()
                .map(|s| s.deviation)
                .collect::<Vec<f64>>())
        })?;

        for step in 1..=steps {
            let deviation = per_trial
                .iter()
                .map(|devs| devs[step - 1])
                .fold(0.0, f64::max);
            checks.push(CheckResult::new(
                format!("corollary-c/{}/k{}", preset.name(), step),
                deviation,
                corollary_threshold(step),
                options.trials,
                check_seed,
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_are_deterministic_modulo_timestamp() {
        let options = VerifyOptions {
            seed: 3,
            trials: 2,
            steps: 1,
            learning_rate: 0.01,
        };
        let a = run(CheckSet::Lossless, &options).unwrap();
        let b = run(CheckSet::Lossless, &options).unwrap();
        let strip = |r: &VerifyReport| {
            let mut v = serde_json::to_value(r).unwrap();
            v.as_object_mut().unwrap().remove("timestamp_unix");
            v
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(a.overall_pass);
    }
}
