//! One full training run: minibatch Adam on the chosen model and penalty,
//! with the tree-regularizer machinery interleaved (per-step buffer
//! recording, scheduled surrogate retraining with convex-hull augmentation,
//! tracking logs), followed by evaluation and artifact persistence.

use crate::autodiff::{AdamState, Matrix, NodeId, Tape};
use crate::error::{Error, Result};
use crate::harness::config::{ModelSpec, RunConfig};
use crate::harness::dataset::{load_dataset, model_rows, LoadedData, ModelRows, SubsetOracle};
use crate::harness::eval::{evaluate_model, DistilledTree};
use crate::harness::report::{MetricsLogger, SweepRecord};
use crate::models::{AnyModel, Batch, GruHmmModel, GruModel, HmmModel, MlpModel};
use crate::regularize::{
    self, RegionPartition, RegionalMode, RegionalRegState, RegularizerKind,
};
use crate::surrogate::{AplSample, SurrogateState};
use crate::data::Split;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub fn init_model(config: &RunConfig, data: &LoadedData, seed: u64) -> Result<AnyModel> {
    let p = data.input_dim();
    let q = data.output_dim();
    let mut model = match &config.model {
        ModelSpec::Mlp { hidden, activation } => {
            if data.is_sequential() {
                return Err(Error::Config(
                    "the mlp family needs tabular data".to_string(),
                ));
            }
            let mut layers = vec![p];
            layers.extend_from_slice(hidden);
            layers.push(q);
            AnyModel::Mlp(MlpModel::new(&layers, *activation, seed))
        }
        ModelSpec::Gru { state_dim } => {
            require_sequential(data)?;
            AnyModel::Gru(GruModel::new(p, *state_dim, q, seed))
        }
        ModelSpec::Hmm { states, gaussian } => {
            require_sequential(data)?;
            AnyModel::Hmm(if *gaussian {
                HmmModel::new_gaussian(*states, p, q, seed)
            } else {
                HmmModel::new_bernoulli(*states, p, q, seed)
            })
        }
        ModelSpec::GruHmm {
            hmm_states,
            gru_state_dim,
        } => {
            require_sequential(data)?;
            AnyModel::GruHmm(GruHmmModel::new(p, *hmm_states, *gru_state_dim, q, seed))
        }
    };
    if (config.init_scale - 1.0).abs() > 1e-12 {
        let scaled: Vec<f64> = model
            .params()
            .values()
            .iter()
            .map(|v| v * config.init_scale)
            .collect();
        model.set_params(&scaled)?;
    }
    Ok(model)
}

fn require_sequential(data: &LoadedData) -> Result<()> {
    if data.is_sequential() {
        Ok(())
    } else {
        Err(Error::Config(
            "sequence model families need sequence data".to_string(),
        ))
    }
}

enum PenaltyState {
    Plain,
    Global(SurrogateState),
    Regional(RegionalRegState),
}

impl PenaltyState {
    fn new(config: &RunConfig, subset_len: usize, n_regions: usize) -> PenaltyState {
        let sc = &config.surrogate;
        let fresh = |index: u64| {
            let mut s = SurrogateState::new(
                subset_len,
                sc.hidden,
                config.seed.wrapping_mul(7).wrapping_add(40_000 + index),
            );
            s.capacity = sc.capacity;
            s.window = sc.window_steps;
            s.epsilon = sc.epsilon;
            s.train_epochs = sc.train_epochs;
            s.learning_rate = sc.learning_rate;
            s
        };
        match config.regularizer {
            RegularizerKind::TreeGlobal => PenaltyState::Global(fresh(0)),
            RegularizerKind::TreeRegionalL0 | RegularizerKind::TreeRegionalL1 => {
                PenaltyState::Regional(RegionalRegState::new(
                    (0..n_regions as u64).map(fresh).collect(),
                ))
            }
            _ => PenaltyState::Plain,
        }
    }
}

fn penalty_node(
    kind: RegularizerKind,
    state: &mut PenaltyState,
    tape: &mut Tape,
    subset: NodeId,
    normalize_sparsemax: bool,
) -> Result<Option<NodeId>> {
    match (kind, state) {
        (RegularizerKind::None, _) => Ok(None),
        (RegularizerKind::L1, _) => Ok(Some(regularize::l1(tape, subset))),
        (RegularizerKind::L2, _) => Ok(Some(regularize::l2(tape, subset))),
        (RegularizerKind::TreeGlobal, PenaltyState::Global(s)) => {
            Ok(Some(regularize::global_tree_penalty(tape, s, subset)?))
        }
        (RegularizerKind::TreeRegionalL0, PenaltyState::Regional(r)) => {
            Ok(Some(regularize::regional_tree_penalty(
                tape,
                r,
                subset,
                RegionalMode::L0Sparsemax,
                normalize_sparsemax,
            )?))
        }
        (RegularizerKind::TreeRegionalL1, PenaltyState::Regional(r)) => {
            Ok(Some(regularize::regional_tree_penalty(
                tape,
                r,
                subset,
                RegionalMode::L1Sum,
                normalize_sparsemax,
            )?))
        }
        _ => Err(Error::Config(
            "penalty state does not match regularizer kind".to_string(),
        )),
    }
}

/// Materialized minibatch.
enum OwnedBatch {
    Tabular { x: Matrix, y: Matrix },
    Sequences { xs: Vec<Matrix>, ys: Vec<Matrix> },
}

impl OwnedBatch {
    fn as_batch(&self) -> Batch<'_> {
        match self {
            OwnedBatch::Tabular { x, y } => Batch::Tabular { x, y },
            OwnedBatch::Sequences { xs, ys } => Batch::Sequences { xs, ys },
        }
    }
}

fn epoch_batches(
    data: &LoadedData,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<OwnedBatch> {
    match data {
        LoadedData::Tabular(d) => {
            let mut idx = d.indices_of(Split::Train);
            idx.shuffle(rng);
            idx.chunks(batch_size)
                .map(|chunk| {
                    let (x, y) = d.subset(chunk);
                    OwnedBatch::Tabular { x, y }
                })
                .collect()
        }
        LoadedData::Sequences(d) => {
            let mut idx = d.indices_of(Split::Train);
            idx.shuffle(rng);
            let mut batches = Vec::new();
            for chunk in idx.chunks(batch_size) {
                // Sequences in one graph must share a length.
                let mut by_len: std::collections::BTreeMap<usize, Vec<usize>> =
                    std::collections::BTreeMap::new();
                for &i in chunk {
                    by_len.entry(d.sequences[i].x.rows()).or_default().push(i);
                }
                for (t_len, members) in by_len {
                    let p = d.sequences[members[0]].x.cols();
                    let q = d.sequences[members[0]].y.cols();
                    let mut xs = Vec::with_capacity(t_len);
                    let mut ys = Vec::with_capacity(t_len);
                    for t in 0..t_len {
                        xs.push(Matrix::from_fn(members.len(), p, |i, j| {
                            d.sequences[members[i]].x.get(t, j)
                        }));
                        ys.push(Matrix::from_fn(members.len(), q, |i, j| {
                            d.sequences[members[i]].y.get(t, j)
                        }));
                    }
                    batches.push(OwnedBatch::Sequences { xs, ys });
                }
            }
            batches
        }
    }
}

/// True APLs of the model's current labeling over reference rows: one value
/// for the global penalty (summed over outputs), or one per region.
fn true_apls(
    rows: &ModelRows,
    labels: &[Vec<bool>],
    regional: bool,
    params: crate::dtree::AplParams,
) -> Result<Vec<f64>> {
    if regional {
        regularize::regional_true_apls(
            &rows.features,
            labels,
            &rows.regions,
            rows.n_regions,
            params,
        )
    } else {
        let mut total = 0.0;
        for l in labels {
            let (_, apl) = crate::dtree::distill_with(&rows.features, l, params)?;
            total += apl;
        }
        Ok(vec![total])
    }
}

fn subset_oracle<'a>(model: &AnyModel, rows: &'a ModelRows) -> SubsetOracle<'a> {
    match model {
        AnyModel::Mlp(m) => SubsetOracle::FullMlp {
            template: m.clone(),
            x: &rows.features,
        },
        AnyModel::Gru(g) => SubsetOracle::HeadOnly {
            states: rows.head_state_matrix().expect("sequence rows carry state"),
            fixed_logits: None,
            state_dim: g.state_dim,
            q: g.output_dim(),
        },
        AnyModel::Hmm(h) => SubsetOracle::HeadOnly {
            states: rows.head_state_matrix().expect("sequence rows carry state"),
            fixed_logits: None,
            state_dim: h.n_states,
            q: h.output_dim(),
        },
        AnyModel::GruHmm(gh) => SubsetOracle::HeadOnly {
            states: rows.head_state_matrix().expect("sequence rows carry state"),
            fixed_logits: rows.fixed_logits.as_ref(),
            state_dim: gh.gru.state_dim,
            q: gh.gru.output_dim(),
        },
    }
}

/// MLP oracles need raw-input features; state-augmented features would be
/// stale for candidate parameters anyway, so candidate APLs are always
/// computed over the feature matrix as labeled by the candidate.
fn candidate_apls(
    oracle: &SubsetOracle,
    theta: &[f64],
    rows: &ModelRows,
    regional: bool,
    params: crate::dtree::AplParams,
) -> Result<Vec<f64>> {
    let labels = oracle.labels_for(theta)?;
    true_apls(rows, &labels, regional, params)
}

struct RunState {
    model: AnyModel,
    adam: AdamState,
    penalty: PenaltyState,
    rng: ChaCha8Rng,
    step: u64,
}

fn record_step(
    state: &mut RunState,
    config: &RunConfig,
    data: &LoadedData,
    partition: Option<&RegionPartition>,
    logger: &mut MetricsLogger,
) -> Result<f64> {
    let regional = config.regularizer.is_regional();
    let rows = model_rows(
        &state.model,
        data,
        Split::Train,
        config.distill_features,
        partition,
    )?;
    let apls = true_apls(&rows, &rows.labels, regional, config.apl_params())?;
    let step = state.step;
    let theta = state.model.regularized_params().values().to_vec();
    match &mut state.penalty {
        PenaltyState::Global(s) => s.record_sample(theta, apls[0], step),
        PenaltyState::Regional(r) => {
            for (s, &apl) in r.surrogates.iter_mut().zip(&apls) {
                s.record_sample(theta.clone(), apl, step);
            }
        }
        PenaltyState::Plain => {}
    }

    if step % config.surrogate.retrain_every_steps as u64 == 0 {
        retrain_surrogates(state, config, &rows, &apls, logger)?;
    }
    Ok(apls.iter().sum())
}

fn retrain_surrogates(
    state: &mut RunState,
    config: &RunConfig,
    rows: &ModelRows,
    current_apls: &[f64],
    logger: &mut MetricsLogger,
) -> Result<()> {
    use rayon::prelude::*;
    let RunState {
        model,
        penalty,
        rng,
        step,
        ..
    } = state;
    let step = *step;
    let theta_now = model.regularized_params().values().to_vec();
    let oracle = subset_oracle(model, rows);
    let count = config.surrogate.augment_count;
    match penalty {
        PenaltyState::Global(s) => {
            if s.buffer_len() == 0 {
                return Ok(());
            }
            let pred_before = s.predict_clamped(&theta_now)?;
            let candidates = if count > 0 {
                s.draw_convex_hull(count, rng)?
            } else {
                Vec::new()
            };
            let augmented: Vec<AplSample> = candidates
                .into_par_iter()
                .map(|theta| {
                    let apl =
                        candidate_apls(&oracle, &theta, rows, false, config.apl_params())?[0];
                    Ok(AplSample {
                        theta,
                        true_apl: apl,
                        step,
                    })
                })
                .collect::<Result<_>>()?;
            if let Some(report) = s.retrain(&augmented, step) {
                let pred_after = s.predict_clamped(&theta_now)?;
                logger.retrain_row(&report, None)?;
                logger.tracking_row(step, None, current_apls[0], pred_before, pred_after)?;
            }
        }
        PenaltyState::Regional(r) => {
            if r.surrogates[0].buffer_len() == 0 {
                return Ok(());
            }
            let candidates = if count > 0 {
                r.surrogates[0].draw_convex_hull(count, rng)?
            } else {
                Vec::new()
            };
            // One regional-APL evaluation per candidate covers every
            // surrogate's training target.
            let candidate_targets: Vec<(Vec<f64>, Vec<f64>)> = candidates
                .into_par_iter()
                .map(|theta| {
                    let apls = candidate_apls(&oracle, &theta, rows, true, config.apl_params())?;
                    Ok((theta, apls))
                })
                .collect::<Result<_>>()?;
            for (region, s) in r.surrogates.iter_mut().enumerate() {
                let pred_before = s.predict_clamped(&theta_now)?;
                let augmented: Vec<AplSample> = candidate_targets
                    .iter()
                    .map(|(theta, targets)| AplSample {
                        theta: theta.clone(),
                        true_apl: targets[region],
                        step,
                    })
                    .collect();
                if let Some(report) = s.retrain(&augmented, step) {
                    let pred_after = s.predict_clamped(&theta_now)?;
                    logger.retrain_row(&report, Some(region))?;
                    logger.tracking_row(
                        step,
                        Some(region),
                        current_apls[region],
                        pred_before,
                        pred_after,
                    )?;
                }
            }
        }
        PenaltyState::Plain => {}
    }
    Ok(())
}

/// Brief unregularized runs whose trajectories seed the surrogate buffers.
fn harvest_restarts(
    config: &RunConfig,
    data: &LoadedData,
    partition: Option<&RegionPartition>,
    state: &mut RunState,
) -> Result<()> {
    if !config.regularizer.is_tree() || config.surrogate.restarts == 0 {
        return Ok(());
    }
    let regional = config.regularizer.is_regional();
    for restart in 0..config.surrogate.restarts {
        let seed = config.seed.wrapping_add(1001 + restart as u64);
        let mut model = init_model(config, data, seed)?;
        let mut adam = AdamState::new(model.params().len(), config.optimizer.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xda7a);
        for _ in 0..config.surrogate.restart_epochs {
            for owned in epoch_batches(data, config.optimizer.batch_size, &mut rng) {
                let mut tape = Tape::new();
                let graph = crate::models::model_loss(
                    &mut tape,
                    &model,
                    &owned.as_batch(),
                    0.0,
                    |_, _| Ok(None),
                )?;
                tape.backward(graph.loss)?;
                let grads = graph.taped.collect_grads(&tape);
                let mut flat = model.params().values().to_vec();
                adam.update(&mut flat, &grads)?;
                model.set_params(&flat)?;

                let rows = model_rows(
                    &model,
                    data,
                    Split::Train,
                    config.distill_features,
                    partition,
                )?;
                let apls = true_apls(&rows, &rows.labels, regional, config.apl_params())?;
                let theta = model.regularized_params().values().to_vec();
                match &mut state.penalty {
                    PenaltyState::Global(s) => s.record_sample(theta, apls[0], 0),
                    PenaltyState::Regional(r) => {
                        for (s, &apl) in r.surrogates.iter_mut().zip(&apls) {
                            s.record_sample(theta.clone(), apl, 0);
                        }
                    }
                    PenaltyState::Plain => {}
                }
            }
        }
    }
    Ok(())
}

pub struct TrainOutput {
    pub record: SweepRecord,
    pub model: AnyModel,
    pub trees: Vec<DistilledTree>,
}

pub fn run_train(config: &RunConfig, out_dir: &Path) -> Result<TrainOutput> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::create_dir_all(out_dir.join("trees"))?;
    std::fs::create_dir_all(out_dir.join("checkpoints"))?;
    std::fs::write(out_dir.join("config.resolved"), config.to_toml())?;

    let data = load_dataset(&config.dataset)?;
    let partition = crate::harness::dataset::build_partition(&config.regions, &data)?;
    if config.regularizer.is_regional() && partition.is_none() {
        return Err(Error::Config(
            "regional tree regularization needs a region spec".to_string(),
        ));
    }
    if let Some(p) = &partition {
        p.save(&out_dir.join("regions.txt"))?;
    }

    let model = init_model(config, &data, config.seed)?;
    let subset_len = model.regularized_params().len();
    let n_regions = partition.as_ref().map_or(1, |p| p.r());
    let mut state = RunState {
        adam: AdamState::new(model.params().len(), config.optimizer.learning_rate),
        penalty: PenaltyState::new(config, subset_len, n_regions),
        model,
        rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed),
        step: 0,
    };
    let mut logger = MetricsLogger::create(&out_dir.join("metrics.csv"))?;

    harvest_restarts(config, &data, partition.as_ref(), &mut state)?;
    if config.regularizer.is_tree() {
        // Initial fit so the penalty is live from the first step.
        let rows = model_rows(
            &state.model,
            &data,
            Split::Train,
            config.distill_features,
            partition.as_ref(),
        )?;
        let apls = true_apls(
            &rows,
            &rows.labels,
            config.regularizer.is_regional(),
            config.apl_params(),
        )?;
        retrain_surrogates(&mut state, config, &rows, &apls, &mut logger)?;
    }

    for epoch in 0..config.optimizer.epochs {
        let mut last_data_loss = f64::NAN;
        let mut last_penalty = f64::NAN;
        let mut last_true_apl = f64::NAN;
        for owned in epoch_batches(&data, config.optimizer.batch_size, &mut state.rng) {
            let RunState {
                model, penalty, ..
            } = &mut state;
            let kind = config.regularizer;
            let normalize = config.surrogate.normalize_sparsemax;
            let mut tape = Tape::new();
            let graph = crate::models::model_loss(
                &mut tape,
                model,
                &owned.as_batch(),
                config.lambda,
                |tape, subset| penalty_node(kind, penalty, tape, subset, normalize),
            )?;
            tape.backward(graph.loss)?;
            let loss_value = tape.scalar(graph.loss);
            let data_loss = tape.scalar(graph.data_loss);
            let penalty_value = graph.penalty.map_or(0.0, |p| tape.scalar(p));
            if !loss_value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: state.step as usize,
                    data_loss,
                    weighted_penalty: config.lambda * penalty_value,
                });
            }
            let grads = graph.taped.collect_grads(&tape);
            drop(tape);
            let mut flat = state.model.params().values().to_vec();
            state.adam.update(&mut flat, &grads)?;
            state.model.set_params(&flat)?;
            state.step += 1;

            if config.regularizer.is_tree() {
                last_true_apl =
                    record_step(&mut state, config, &data, partition.as_ref(), &mut logger)?;
            }
            last_data_loss = data_loss;
            last_penalty = penalty_value;
        }
        logger.epoch_row(epoch, state.step, last_data_loss, last_penalty, last_true_apl)?;
        if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
            write_checkpoint(
                &state.model,
                &out_dir.join("checkpoints").join(format!("epoch-{epoch:04}.json")),
            )?;
        }
    }

    write_checkpoint(&state.model, &out_dir.join("checkpoints").join("final.json"))?;

    // Final evaluation, distilled trees, and the sweep record.
    let eval = evaluate_model(&state.model, &data, partition.as_ref(), config)?;
    for t in &eval.trees {
        let stem = format!("region-{}-output-{}", t.region, t.output);
        std::fs::write(
            out_dir.join("trees").join(format!("{stem}.json")),
            t.tree.to_json(),
        )?;
        let dot = crate::dtree::export_dot(&t.tree, &eval.feature_names)?;
        std::fs::write(out_dir.join("trees").join(format!("{stem}.dot")), dot)?;
    }

    let record = SweepRecord {
        experiment: config.experiment.clone(),
        regularizer: config.regularizer.label().to_string(),
        lambda: config.lambda,
        seed: config.seed,
        config_hash: config.hash(),
        train: eval.train,
        test: eval.test,
        valid: eval.valid,
        run_dir: out_dir.to_path_buf(),
    };
    std::fs::write(
        out_dir.join("record.json"),
        serde_json::to_string_pretty(&record).map_err(|e| Error::Serde(e.to_string()))?,
    )?;
    Ok(TrainOutput {
        record,
        model: state.model,
        trees: eval.trees,
    })
}

pub fn write_checkpoint(model: &AnyModel, path: &Path) -> Result<()> {
    std::fs::write(
        path,
        serde_json::to_string(model).map_err(|e| Error::Serde(e.to_string()))?,
    )?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<AnyModel> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
}
