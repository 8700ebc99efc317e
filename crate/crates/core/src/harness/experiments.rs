use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, FilterKind, Method, Truncation};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMap, FeatureMapSpec};
use crate::filters::{ExRlsState, KernelFilterState, LinearFilter, LmsState, RlsState};
use crate::ispeed::{Admission, DeferredUpdates, NoveltyGate, SpeedState};
use crate::kernel::{cross_gram, gram_matrix, KernelConfig};
use crate::spectral::{
    build_eigenmap, decompose, eigenmap_from_points, frobenius_error, plain_frobenius_error, reconstruct_gram,
    subspace_distance,
};
use crate::timeseries::{add_noise_with, generate_mg, make_dataset, standardize, RegressionDataset};

/// Mean test-MSE learning curve of one method across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub label: String,
    /// Training steps (1-based counts) at which the test MSE was evaluated.
    pub steps: Vec<usize>,
    pub mean_mse: Vec<f64>,
    /// Sample standard deviation across trials (0 for a single trial).
    pub std_mse: Vec<f64>,
    /// Final test MSE of every trial, in trial order.
    pub finals: Vec<f64>,
    /// Mean feature dimension or final dictionary size.
    pub mean_size: f64,
    pub config_hash: u64,
}

impl LearningCurve {
    pub fn final_mean(&self) -> f64 {
        *self.mean_mse.last().unwrap_or(&f64::NAN)
    }

    pub fn final_std(&self) -> f64 {
        *self.std_mse.last().unwrap_or(&f64::NAN)
    }

    /// Standard error of the mean final MSE.
    pub fn final_se(&self) -> f64 {
        self.final_std() / (self.finals.len() as f64).sqrt()
    }
}

/// Mean normalized (and plain) Frobenius reconstruction error per `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionTable {
    pub m: Vec<usize>,
    pub frobenius_mean: Vec<f64>,
    pub plain_mean: Vec<f64>,
    /// Trials contributing to each row.
    pub trials: Vec<usize>,
}

/// Subspace distance to the batch solution after each admitted update.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceTrajectory {
    /// Mean distance after `k` updates, `k = 0..len`, over all trials (the
    /// length is the smallest update count of any trial).
    pub mean_distance: Vec<f64>,
    /// Full per-trial trajectories.
    pub per_trial: Vec<Vec<f64>>,
    pub interlacing_violations: usize,
}

impl SubspaceTrajectory {
    /// Centered moving average over `window` points (shrinking at the ends).
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        moving_average(&self.mean_distance, window)
    }

    /// Fraction of trials whose last distance is below their first.
    pub fn improved_fraction(&self) -> f64 {
        let ok = self.per_trial.iter().filter(|t| t.last() < t.first()).count();
        ok as f64 / self.per_trial.len() as f64
    }
}

pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let half = w / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + w - half).min(xs.len());
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Generator for trial `trial`: the base seed selects the key and the trial
/// index the stream, so trials are independent and order-free.
pub fn trial_rng(base_seed: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(base_seed);
    rng.set_stream(trial as u64);
    rng
}

/// Runs `f` for every trial, in parallel up to `SPEED_THREADS` threads, and
/// returns the results in trial order.
pub fn run_trials<T: Send>(cfg: &ExperimentConfig, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let threads = std::env::var("SPEED_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&t| t > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| f(t).map_err(|e| e.context(format!("trial {t} (seed {}, stream {t})", cfg.seed))))
            .collect()
    })
}

/// The standardized series shared by all trials is regenerated from the
/// noise-free Mackey-Glass samples; noise and window start are per trial.
pub fn trial_dataset(cfg: &ExperimentConfig, clean: &[f64], rng: &mut ChaCha20Rng) -> Result<RegressionDataset> {
    let noisy = add_noise_with(clean, cfg.noise, rng)?;
    let (z, _) = standardize(&noisy)?;
    make_dataset(&z, cfg.split, None, rng)
}

/// Points admitted in stream order by a novelty gate of squared radius `threshold`.
pub fn novelty_filter(points: &[Vec<f64>], threshold: f64) -> Result<Vec<Vec<f64>>> {
    let gate = NoveltyGate::new(threshold)?;
    let mut dict: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if gate.admits(&dict, p) {
            dict.push(p.clone());
        }
    }
    Ok(dict)
}

fn kernel(cfg: &ExperimentConfig) -> Result<KernelConfig> {
    KernelConfig::gaussian(cfg.sigma)
}

fn eval_steps(cfg: &ExperimentConfig) -> Vec<usize> {
    let n = cfg.split.train_len;
    let mut steps: Vec<usize> = (1..=n / cfg.eval_every).map(|k| k * cfg.eval_every).collect();
    if steps.last() != Some(&n) {
        steps.push(n);
    }
    steps
}

fn make_filter(cfg: &ExperimentConfig, dim: usize) -> Result<Box<dyn LinearFilter>> {
    Ok(match cfg.filter {
        FilterKind::Lms => Box::new(LmsState::new(dim, cfg.eta)?),
        FilterKind::Rls => Box::new(RlsState::new(dim, cfg.lambda, cfg.delta)?),
        FilterKind::ExRls => {
            Box::new(ExRlsState::scaled_identity(dim, cfg.exrls_alpha, cfg.lambda, cfg.delta, cfg.exrls_q)?)
        }
    })
}

fn test_mse(phi_test: &DMatrix<f64>, w: &DVector<f64>, targets: &[f64]) -> f64 {
    let pred = phi_test * w;
    pred.iter().zip(targets).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / targets.len() as f64
}

/// Raw delay vectors as features.
struct Identity(usize);

impl FeatureMap for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(x))
    }
}

struct TrialCurve {
    mse: Vec<f64>,
    size: usize,
}

/// Builds the feature map of a non-kernel method for one trial.
fn build_features(
    cfg: &ExperimentConfig,
    method: &Method,
    ds: &RegressionDataset,
    seed: u64,
) -> Result<Box<dyn FeatureMap>> {
    let k = kernel(cfg)?;
    let batch_points = |batch: Option<usize>| -> Result<&[Vec<f64>]> {
        let b = batch.unwrap_or(cfg.batch);
        if b == 0 || b > ds.train_inputs.len() {
            return Err(Error::Config(format!("batch {b} must be in 1..={}", ds.train_inputs.len())));
        }
        Ok(&ds.train_inputs[..b])
    };
    Ok(match *method {
        Method::Speed { m, batch } => Box::new(eigenmap_from_points(&k, batch_points(batch)?, m.unwrap_or(cfg.m))?),
        Method::SparseSpeed { m, batch } => {
            let dict = novelty_filter(batch_points(batch)?, cfg.d_th)?;
            Box::new(eigenmap_from_points(&k, &dict, m.unwrap_or(cfg.m))?)
        }
        Method::Features { kind, dim } => {
            let degree = match kind {
                FeatureKind::Taylor => cfg.taylor_degree(dim)?,
                FeatureKind::Gq => cfg.gq_degree,
                _ => 0,
            };
            FeatureMapSpec { kind, dimension: dim, kernel: k, seed, degree }.build(ds.embedding)?
        }
        Method::Linear => Box::new(Identity(ds.embedding)),
        Method::Klms | Method::Qklms { .. } => unreachable!("kernel methods have no explicit features"),
    })
}

fn run_linear_method(
    cfg: &ExperimentConfig,
    map: &dyn FeatureMap,
    ds: &RegressionDataset,
    steps: &[usize],
) -> Result<TrialCurve> {
    let phi_train = map.features_many(&ds.train_inputs)?;
    let phi_test = map.features_many(&ds.test_inputs)?;
    let mut filter = make_filter(cfg, map.dim())?;
    let mut mse = Vec::with_capacity(steps.len());
    let mut next = steps.iter().peekable();
    for (t, y) in ds.train_targets.iter().enumerate() {
        filter.step(&phi_train.row(t).transpose(), *y)?;
        if next.peek() == Some(&&(t + 1)) {
            next.next();
            mse.push(test_mse(&phi_test, filter.weights(), &ds.test_targets));
        }
    }
    Ok(TrialCurve { mse, size: map.dim() })
}

fn run_kernel_method(cfg: &ExperimentConfig, q: f64, ds: &RegressionDataset, steps: &[usize]) -> Result<TrialCurve> {
    let mut filter = KernelFilterState::qklms(kernel(cfg)?, cfg.eta, q)?;
    let mut mse = Vec::with_capacity(steps.len());
    let mut next = steps.iter().peekable();
    for (t, (x, y)) in ds.train_inputs.iter().zip(&ds.train_targets).enumerate() {
        filter.step(x, *y)?;
        if next.peek() == Some(&&(t + 1)) {
            next.next();
            let mut acc = 0.0;
            for (xt, yt) in ds.test_inputs.iter().zip(&ds.test_targets) {
                acc += (yt - filter.predict(xt)?).powi(2);
            }
            mse.push(acc / ds.test_targets.len() as f64);
        }
    }
    Ok(TrialCurve { mse, size: filter.centers().len() })
}

fn run_method(
    cfg: &ExperimentConfig,
    method: &Method,
    ds: &RegressionDataset,
    seed: u64,
    steps: &[usize],
) -> Result<TrialCurve> {
    match *method {
        Method::Klms => run_kernel_method(cfg, 0.0, ds, steps),
        Method::Qklms { q } => run_kernel_method(cfg, q.unwrap_or(cfg.quantization), ds, steps),
        _ => {
            let map = build_features(cfg, method, ds, seed)?;
            run_linear_method(cfg, map.as_ref(), ds, steps)
        }
    }
}

/// Label used in reports, with config-level defaults filled in.
pub fn method_label(cfg: &ExperimentConfig, method: &Method) -> String {
    match *method {
        Method::Speed { m, batch } => format!("speed({}/{})", m.unwrap_or(cfg.m), batch.unwrap_or(cfg.batch)),
        Method::SparseSpeed { m, batch } => {
            format!("sparse-speed({}/{})", m.unwrap_or(cfg.m), batch.unwrap_or(cfg.batch))
        }
        Method::Features { kind, dim } => format!("{kind}({dim})"),
        Method::Klms => "klms".into(),
        Method::Qklms { q } => format!("qklms({})", q.unwrap_or(cfg.quantization)),
        Method::Linear => "linear".into(),
    }
}

fn aggregate(label: String, steps: Vec<usize>, trials: &[TrialCurve], hash: u64) -> LearningCurve {
    let n = trials.len() as f64;
    let points = steps.len();
    let mut mean = vec![0.0; points];
    let mut std = vec![0.0; points];
    for (j, (mj, sj)) in mean.iter_mut().zip(std.iter_mut()).enumerate() {
        *mj = trials.iter().map(|t| t.mse[j]).sum::<f64>() / n;
        if trials.len() > 1 {
            *sj = (trials.iter().map(|t| (t.mse[j] - *mj).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        }
    }
    LearningCurve {
        label,
        steps,
        mean_mse: mean,
        std_mse: std,
        finals: trials.iter().map(|t| *t.mse.last().unwrap_or(&f64::NAN)).collect(),
        mean_size: trials.iter().map(|t| t.size as f64).sum::<f64>() / n,
        config_hash: hash,
    }
}

fn clean_series(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    generate_mg(&cfg.mg)
}

/// Learning curves of every configured method, averaged over trials.
pub fn run_prediction_experiment(cfg: &ExperimentConfig) -> Result<Vec<LearningCurve>> {
    cfg.validate()?;
    let clean = clean_series(cfg)?;
    let steps = eval_steps(cfg);
    let per_trial = run_trials(cfg, |t| {
        let mut rng = trial_rng(cfg.seed, t);
        let ds = trial_dataset(cfg, &clean, &mut rng)?;
        cfg.methods
            .iter()
            .map(|method| {
                let seed: u64 = rng.random();
                run_method(cfg, method, &ds, seed, &steps).map_err(|e| e.context(method_label(cfg, method)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let hash = cfg.hash();
    Ok(cfg
        .methods
        .iter()
        .enumerate()
        .map(|(i, method)| {
            let curves: Vec<TrialCurve> =
                per_trial.iter().map(|trial| TrialCurve { mse: trial[i].mse.clone(), size: trial[i].size }).collect();
            aggregate(method_label(cfg, method), steps.clone(), &curves, hash)
        })
        .collect())
}

struct TrialReconstruction {
    normalized: Vec<f64>,
    plain: Vec<f64>,
}

/// Normalized Frobenius error of rank-`m` Gram reconstructions.
///
/// Each trial takes the first `recon_points` training inputs. The dense
/// variant reconstructs from the eigenmap's feature dot products while `m` is
/// within the usable rank and from `V_m Lambda_m V_m^T` beyond it. The sparse
/// variant builds the eigenmap on the novelty-filtered points and reconstructs
/// the full Gram matrix from the features of all points.
pub fn run_reconstruction_experiment(cfg: &ExperimentConfig) -> Result<ReconstructionTable> {
    cfg.validate()?;
    let clean = clean_series(cfg)?;
    let k = kernel(cfg)?;
    let n = cfg.recon_points;
    if n == 0 || n > cfg.split.train_len {
        return Err(Error::Config(format!("recon_points must be in 1..={}", cfg.split.train_len)));
    }
    let mut m_values = cfg.m_values.clone();
    m_values.retain(|&m| m >= 1 && m <= n);
    m_values.sort_unstable();
    m_values.dedup();
    let trials = run_trials(cfg, |t| {
        let mut rng = trial_rng(cfg.seed, t);
        let ds = trial_dataset(cfg, &clean, &mut rng)?;
        let points = &ds.train_inputs[..n];
        let gram = gram_matrix(&k, points)?;
        let full = gram.entries().clone();
        let mut out = TrialReconstruction { normalized: Vec::new(), plain: Vec::new() };
        if cfg.recon_sparse {
            let dict = novelty_filter(points, cfg.d_th)?;
            let sys = decompose(&gram_matrix(&k, &dict)?)?;
            let cross = cross_gram(&k, &dict, points)?;
            for &m in m_values.iter().take_while(|&&m| m <= sys.usable_rank()) {
                let map = build_eigenmap(&sys, &dict, &k, m)?;
                let feats = map.psi() * &cross;
                let approx = feats.transpose() * feats;
                out.normalized.push(frobenius_error(&full, &approx)?);
                out.plain.push(plain_frobenius_error(&full, &approx)?);
            }
        } else {
            let sys = decompose(&gram)?;
            let rank = sys.usable_rank();
            for &m in &m_values {
                let approx = if m <= rank {
                    reconstruct_gram(&build_eigenmap(&sys, points, &k, m)?)?
                } else {
                    sys.reconstruct_rank(m)
                };
                out.normalized.push(frobenius_error(&full, &approx)?);
                out.plain.push(plain_frobenius_error(&full, &approx)?);
            }
        }
        Ok(out)
    })?;
    let supported = |row: usize| trials.iter().filter(|t| t.normalized.len() > row).count();
    let rows = match cfg.recon_truncation {
        Truncation::Min => trials.iter().map(|t| t.normalized.len()).min().unwrap_or(0),
        Truncation::Available => trials.iter().map(|t| t.normalized.len()).max().unwrap_or(0),
    };
    let mut table =
        ReconstructionTable { m: Vec::new(), frobenius_mean: Vec::new(), plain_mean: Vec::new(), trials: Vec::new() };
    for (row, &m) in m_values.iter().enumerate().take(rows) {
        let count = supported(row);
        let mean =
            |f: &dyn Fn(&TrialReconstruction) -> Option<f64>| trials.iter().filter_map(f).sum::<f64>() / count as f64;
        table.m.push(m);
        table.frobenius_mean.push(mean(&|t| t.normalized.get(row).copied()));
        table.plain_mean.push(mean(&|t| t.plain.get(row).copied()));
        table.trials.push(count);
    }
    Ok(table)
}

fn seed_state(cfg: &ExperimentConfig, ds: &RegressionDataset) -> Result<SpeedState> {
    let count = cfg.seed_count.min(ds.train_inputs.len());
    let dict = novelty_filter(&ds.train_inputs[..count], cfg.seed_threshold())?;
    Ok(SpeedState::new(kernel(cfg)?, dict, cfg.m, cfg.transfer_mode)?.with_reorthonormalization(cfg.reorth_every))
}

/// Distance between the incrementally grown sparse eigenmap and the batch
/// eigenmap of the full sparse dictionary, after every admitted update.
pub fn run_subspace_experiment(cfg: &ExperimentConfig) -> Result<SubspaceTrajectory> {
    cfg.validate()?;
    let clean = clean_series(cfg)?;
    let k = kernel(cfg)?;
    let trials = run_trials(cfg, |t| {
        let mut rng = trial_rng(cfg.seed, t);
        let ds = trial_dataset(cfg, &clean, &mut rng)?;
        let truth_dict = novelty_filter(&ds.train_inputs, cfg.d_th)?;
        let truth = eigenmap_from_points(&k, &truth_dict, cfg.m)?;
        let mut state = seed_state(cfg, &ds)?;
        let gate = NoveltyGate::new(cfg.d_th)?;
        let mut trajectory = vec![subspace_distance(state.eigenmap(), &truth)?];
        for x in &ds.train_inputs[cfg.seed_count.min(ds.train_inputs.len())..] {
            if state.sispeed_step(&gate, x)? {
                trajectory.push(subspace_distance(state.eigenmap(), &truth)?);
            }
        }
        Ok((trajectory, state.interlacing_violations()))
    })?;
    let len = trials.iter().map(|(t, _)| t.len()).min().unwrap_or(0);
    let mean_distance = (0..len).map(|j| trials.iter().map(|(t, _)| t[j]).sum::<f64>() / trials.len() as f64).collect();
    Ok(SubspaceTrajectory {
        mean_distance,
        interlacing_violations: trials.iter().map(|(_, v)| v).sum(),
        per_trial: trials.into_iter().map(|(t, _)| t).collect(),
    })
}

/// Learning curves of sparse incremental SPEED against the fixed sparse seed
/// eigenmap and the full-batch eigenmap, all with `m` eigenfunctions and LMS.
///
/// Returns the curves in that order; the first has the final dictionary size as
/// its size.
pub fn run_continual_experiment(cfg: &ExperimentConfig) -> Result<Vec<LearningCurve>> {
    cfg.validate()?;
    let clean = clean_series(cfg)?;
    let steps = eval_steps(cfg);
    let train = cfg.split.train_len;
    let per_trial = run_trials(cfg, |t| {
        let mut rng = trial_rng(cfg.seed, t);
        let ds = trial_dataset(cfg, &clean, &mut rng)?;
        let mut state = seed_state(cfg, &ds)?;
        let fixed = state.eigenmap().clone();
        let mut schedule = DeferredUpdates::new(NoveltyGate::new(cfg.d_th)?, cfg.update_batch)?;
        let mut phi_test = state.eigenmap().embed_many(&ds.test_inputs)?;
        let mut mse = Vec::with_capacity(steps.len());
        let mut next = steps.iter().peekable();
        let start_updates = cfg.seed_count.min(train);
        for (i, (x, y)) in ds.train_inputs.iter().zip(&ds.train_targets).enumerate() {
            let phi = state.embed(x)?;
            let mut lms = LmsState::with_weights(state.weights().clone(), cfg.eta)?;
            lms.step(&phi, *y)?;
            state.set_weights(lms.weights().clone())?;
            if i >= start_updates {
                if let Admission::Applied(_) = schedule.offer(&mut state, x)? {
                    phi_test = state.eigenmap().embed_many(&ds.test_inputs)?;
                }
            }
            if next.peek() == Some(&&(i + 1)) {
                next.next();
                mse.push(test_mse(&phi_test, state.weights(), &ds.test_targets));
            }
        }
        let incremental = TrialCurve { mse, size: state.dictionary().len() };
        let fixed_curve = run_linear_method(cfg, &fixed, &ds, &steps)?;
        let full = eigenmap_from_points(&kernel(cfg)?, &ds.train_inputs, cfg.m)?;
        let full_curve = run_linear_method(cfg, &full, &ds, &steps)?;
        Ok([incremental, fixed_curve, full_curve])
    })?;
    let hash = cfg.hash();
    let labels = [
        format!("sispeed({}/{})", cfg.m, cfg.seed_count),
        format!("sparse-speed({}/{})", cfg.m, cfg.seed_count),
        format!("speed({}/{train})", cfg.m),
    ];
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let curves: Vec<TrialCurve> =
                per_trial.iter().map(|t| TrialCurve { mse: t[i].mse.clone(), size: t[i].size }).collect();
            aggregate(label, steps.clone(), &curves, hash)
        })
        .collect())
}

/// Final-MSE statistics of every method for each value of one config key.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param: String,
    pub values: Vec<String>,
    pub labels: Vec<String>,
    /// `rows[v][j]` = (mean, std) final MSE of method `j` at value `v`.
    pub rows: Vec<Vec<(f64, f64)>>,
}

/// Re-runs the prediction experiment with `param` set to each value in turn.
pub fn sweep(cfg: &ExperimentConfig, param: &str, values: &[String]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut table = SweepTable { param: param.into(), values: values.to_vec(), labels: Vec::new(), rows: Vec::new() };
    for v in values {
        let mut c = cfg.clone();
        c.set(param, v)?;
        c.validate()?;
        let curves = run_prediction_experiment(&c)?;
        if table.labels.is_empty() {
            // labels from the first value; the swept key may appear in them
            table.labels = cfg.methods.iter().map(|m| m.to_string()).collect();
        }
        table.rows.push(curves.iter().map(|c| (c.final_mean(), c.final_std())).collect());
    }
    Ok(table)
}
