use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Adam, GraphBatch, Mode, Model};
use crate::error::{Error, Result};
use crate::eval::mae;
use crate::features::{LabelPair, NormStats};
use crate::graph::CircuitGraph;
use crate::reconstruct::{reconstruct_metrics, InferredGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_graphs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, batch_graphs: 8, patience: 10 }
    }
}

/// A labeled graph with its normalized tensors.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub graph: CircuitGraph,
    pub batch: GraphBatch,
    pub y: Array2<f64>,
    /// Post-synthesis metrics implied by the labels.
    pub gt_delay: f64,
    pub gt_area: f64,
}

impl Sample {
    pub fn new(id: impl Into<String>, graph: CircuitGraph, norm: &NormStats) -> Result<Self> {
        let id = id.into();
        let features = graph
            .features()
            .ok_or_else(|| Error::Consistency(format!("{id}: graph has no features")))?;
        let labels = graph
            .labels()
            .ok_or_else(|| Error::Consistency(format!("{id}: graph has no labels")))?
            .to_vec();
        let x = norm.normalize_features(features);
        let y = norm.normalize_labels(&labels);
        let batch = GraphBatch::from_graph(&graph, x)?;
        let truth = reconstruct_metrics(&InferredGraph::new(graph.clone(), labels)?);
        Ok(Sample { id, graph, batch, y, gt_delay: truth.delay, gt_area: truth.area })
    }
}

/// Eval-mode per-node predictions for one graph, in label units. Reads only
/// the graph's features.
pub fn predict_labels(model: &Model, graph: &CircuitGraph, norm: &NormStats) -> Result<Vec<LabelPair>> {
    let features = graph
        .features()
        .ok_or_else(|| Error::Consistency("graph has no features".into()))?;
    let batch = GraphBatch::from_graph(graph, norm.normalize_features(features))?;
    let z = model.predict(&batch)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite prediction".into()));
    }
    Ok(norm.denormalize_labels(&z))
}

pub fn infer(model: &Model, graph: &CircuitGraph, norm: &NormStats) -> Result<InferredGraph> {
    let labels = predict_labels(model, graph, norm)?;
    InferredGraph::from_raw(graph.clone().without_labels(), labels)
}

/// Per design `(pred_delay, gt_delay, pred_area, gt_area)`.
pub fn design_errors(model: &Model, samples: &[Sample], norm: &NormStats) -> Result<Vec<(f64, f64, f64, f64)>> {
    samples
        .par_iter()
        .map(|s| {
            let m = reconstruct_metrics(&infer(model, &s.graph, norm)?);
            Ok((m.delay, s.gt_delay, m.area, s.gt_area))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_delay_mae: Option<f64>,
    pub val_area_mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept (the last one without validation data).
    pub best_epoch: usize,
}

fn validation_mae(model: &Model, val: &[Sample], norm: &NormStats) -> Result<(f64, f64)> {
    let rows = design_errors(model, val, norm)?;
    let ids: Vec<String> = val.iter().map(|s| s.id.clone()).collect();
    let col = |f: fn(&(f64, f64, f64, f64)) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    Ok((mae(&col(|r| r.0), &col(|r| r.1), &ids)?, mae(&col(|r| r.2), &col(|r| r.3), &ids)?))
}

/// Mini-batch ADAM on the mean squared error of normalized labels.
///
/// Graph order is reshuffled every epoch from the model seed. With a
/// validation split, training stops after `patience` epochs without
/// improvement of delay MAE + area MAE and the best parameters are kept.
pub fn train(
    model: &mut Model,
    adam: &mut Adam,
    train_set: &[Sample],
    val: &[Sample],
    norm: &NormStats,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Domain("empty training split".into()));
    }
    if cfg.batch_graphs == 0 {
        return Err(Error::Domain("batch_graphs must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x7a11_0c0d_e5ee_d000);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Model, Adam)> = None;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_graphs).enumerate() {
            let parts: Vec<&GraphBatch> = chunk.iter().map(|&i| &train_set[i].batch).collect();
            let batch = GraphBatch::concat(&parts)?;
            let ys: Vec<_> = chunk.iter().map(|&i| train_set[i].y.view()).collect();
            let y = concatenate(Axis(0), &ys).map_err(|e| Error::Structural(e.to_string()))?;
            let (loss, grad, cache) = model.loss_and_grad(&batch, &y, Mode::Train { dropout: true }, Some(&mut rng))?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}, batch {b}")));
            }
            model.update_running(&cache);
            adam.update(&mut model.params, &grad);
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let (vd, va) = if val.is_empty() {
            (None, None)
        } else {
            let (d, a) = validation_mae(model, val, norm)?;
            (Some(d), Some(a))
        };
        log::info!("epoch {epoch}: loss {train_loss:.5} val delay {vd:?} area {va:?}");
        epochs.push(EpochMetrics { epoch, train_loss, val_delay_mae: vd, val_area_mae: va });
        if let (Some(d), Some(a)) = (vd, va) {
            let score = d + a;
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, epoch, model.clone(), adam.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, m, a)) => {
            *model = m;
            *adam = a;
            epoch
        }
        None => epochs.len().saturating_sub(1),
    };
    Ok(TrainReport { epochs, best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{annotate_features, build_labels, fit_normalization};
    use crate::graph::netlist_to_graph;
    use crate::library::default_library;
    use crate::nn::ModelConfig;
    use crate::physopt::{aggressive_target, synthesize, SynthConfig};
    use crate::sta::analyze;
    use crate::testkit::random_netlist;

    fn labeled(seed: u64) -> CircuitGraph {
        let lib = default_library(0);
        let g = netlist_to_graph(&random_netlist(seed, 40)).unwrap();
        let post = synthesize(&g, &lib, &SynthConfig::new(aggressive_target(&g, &lib, 0.6).unwrap())).unwrap().graph;
        let (rp, rq) = (analyze(&g, &lib).unwrap(), analyze(&post, &lib).unwrap());
        let labels = build_labels(&g, &post, &rp, &rq, &lib).unwrap();
        annotate_features(&g, &rp, &lib).unwrap().with_labels(labels).unwrap()
    }

    fn small() -> ModelConfig {
        ModelConfig { hidden: 16, heads: 2, head_dim: 8, layers: 2, ..ModelConfig::default() }
    }

    #[test]
    fn overfits_one_graph() {
        let g = labeled(11);
        let norm = fit_normalization([&g]).unwrap();
        let s = Sample::new("g", g, &norm).unwrap();
        let mut model = Model::new(ModelConfig { dropout_p: 0.0, ..small() }).unwrap();
        let mut adam = Adam::new(model.config.lr, model.param_count());
        let (first, ..) = model.loss_and_grad(&s.batch, &s.y, Mode::Train { dropout: false }, None).unwrap();
        let cfg = TrainConfig { epochs: 500, batch_graphs: 1, patience: 10 };
        let report = train(&mut model, &mut adam, std::slice::from_ref(&s), &[], &norm, &cfg).unwrap();
        let last = report.epochs.last().unwrap().train_loss;
        assert!(last < 0.01 * first, "loss {first} -> {last}");
        assert_eq!(adam.step, 500);
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let g = labeled(12);
        let norm = fit_normalization([&g]).unwrap();
        let s = Sample::new("g", g, &norm).unwrap();
        let mut model = Model::new(ModelConfig { lr: 0.0, ..small() }).unwrap();
        let before = model.params.clone();
        let mut adam = Adam::new(0.0, model.param_count());
        let cfg = TrainConfig { epochs: 5, batch_graphs: 1, patience: 10 };
        train(&mut model, &mut adam, &[s], &[], &norm, &cfg).unwrap();
        assert_eq!(model.params, before);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let graphs: Vec<_> = (0..5).map(labeled).collect();
        let norm = fit_normalization(&graphs).unwrap();
        let samples: Vec<_> = graphs.iter().enumerate().map(|(i, g)| Sample::new(format!("g{i}"), g.clone(), &norm).unwrap()).collect();
        let run = || {
            let mut model = Model::new(small()).unwrap();
            let mut adam = Adam::new(model.config.lr, model.param_count());
            let cfg = TrainConfig { epochs: 4, batch_graphs: 2, patience: 2 };
            let r = train(&mut model, &mut adam, &samples[..3], &samples[3..], &norm, &cfg).unwrap();
            (model, adam, r)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn prediction_ignores_labels() {
        let g = labeled(13);
        let norm = fit_normalization([&g]).unwrap();
        let model = Model::new(small()).unwrap();
        let zeroed = g.clone().with_labels(vec![LabelPair::default(); g.len()]).unwrap();
        assert_eq!(predict_labels(&model, &g, &norm).unwrap(), predict_labels(&model, &zeroed, &norm).unwrap());
    }
}
