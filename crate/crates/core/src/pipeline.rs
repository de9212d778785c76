//! Dataset stages shared by the command-line tool and the tests.
//!
//! Every design draws its randomness from `sample_seed(root, index)`, so
//! parallel generation produces exactly what serial generation would.

use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adder::{random_prefix_tree, tree_to_netlist};
use crate::error::{Error, Result};
use crate::eval::{DesignEval, EvalSummary};
use crate::features::{annotate_features, build_labels, fit_normalization, LabelPair, NormStats};
use crate::graph::{netlist_to_graph, CircuitGraph};
use crate::io::{GraphDoc, GraphHeader, Role, Split, GRAPH_SCHEMA};
use crate::library::CellLibrary;
use crate::nn::{infer, train, Adam, Checkpoint, Model, ModelConfig, Sample, TrainConfig, TrainReport};
use crate::physopt::{aggressive_target, synthesize, SynthConfig};
use crate::reconstruct::{reconstruct_metrics, InferredGraph};
use crate::sta::analyze;

/// Seed of design `index` under root seed `root`: the first output of
/// ChaCha8 stream `index`.
pub fn sample_seed(root: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts { train: 200, val: 50, test: 50 }
    }
}

impl SplitCounts {
    /// 60/20/20 split of `n` designs.
    pub fn proportional(n: usize) -> Self {
        let train = n * 6 / 10;
        let val = n * 2 / 10;
        SplitCounts { train, val, test: n - train - val }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    /// Splits are contiguous index ranges: train, then val, then test.
    pub fn split_of(&self, index: usize) -> Split {
        if index < self.train {
            Split::Train
        } else if index < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// Pre-synthesis graphs of random prefix adders.
pub fn gen_dataset(width: u32, counts: SplitCounts, root_seed: u64, lib: &CellLibrary) -> Result<Vec<GraphDoc>> {
    let (version, fingerprint) = (lib.version.clone(), lib.fingerprint());
    (0..counts.total())
        .into_par_iter()
        .map(|i| {
            let seed = sample_seed(root_seed, i as u64);
            let graph = netlist_to_graph(&tree_to_netlist(&random_prefix_tree(width, seed)?)?)?;
            Ok(GraphDoc {
                header: GraphHeader {
                    schema: GRAPH_SCHEMA,
                    role: Role::Pre,
                    id: format!("adder{width}-{i:05}"),
                    split: counts.split_of(i),
                    index: i as u64,
                    seed,
                    width,
                    library_version: version.clone(),
                    library: fingerprint.clone(),
                    target: None,
                    target_met: None,
                    post_delay: None,
                    post_area: None,
                    norm: None,
                },
                graph,
            })
        })
        .collect()
}

/// Runs the reference optimizer on every pre-synthesis graph.
pub fn synth_docs(pre: &[GraphDoc], lib: &CellLibrary, alpha: f64) -> Result<Vec<GraphDoc>> {
    pre.par_iter()
        .map(|d| {
            d.header.expect_role(&[Role::Pre])?;
            d.header.check_library(lib)?;
            let target = aggressive_target(&d.graph, lib, alpha)?;
            let out = synthesize(&d.graph, lib, &SynthConfig::new(target))?;
            let r = analyze(&out.graph, lib)?;
            let mut header = d.header.clone();
            header.role = Role::Post;
            header.target = Some(target);
            header.target_met = Some(out.met);
            header.post_delay = Some(r.worst_delay);
            header.post_area = Some(r.total_area);
            Ok(GraphDoc { header, graph: out.graph })
        })
        .collect()
}

/// Annotated pre-synthesis graphs carrying delta labels against their
/// synthesized counterparts. Pairs are matched by design id.
pub fn label_docs(pre: &[GraphDoc], post: &[GraphDoc], lib: &CellLibrary) -> Result<Vec<GraphDoc>> {
    if pre.len() != post.len() {
        return Err(Error::Consistency(format!("{} pre graphs but {} post graphs", pre.len(), post.len())));
    }
    pre.par_iter()
        .zip(post)
        .map(|(a, b)| {
            a.header.expect_role(&[Role::Pre])?;
            b.header.expect_role(&[Role::Post])?;
            if a.header.id != b.header.id {
                return Err(Error::Consistency(format!("pre graph {} paired with post graph {}", a.header.id, b.header.id)));
            }
            a.header.check_library(lib)?;
            b.header.check_library(lib)?;
            let (rp, rq) = (analyze(&a.graph, lib)?, analyze(&b.graph, lib)?);
            let labels = build_labels(&a.graph, &b.graph, &rp, &rq, lib)?;
            let graph = annotate_features(&a.graph, &rp, lib)?.with_labels(labels)?;
            let mut header = b.header.clone();
            header.role = Role::Labeled;
            Ok(GraphDoc { header, graph })
        })
        .collect()
}

fn of_split(docs: &[GraphDoc], split: Split) -> impl Iterator<Item = &GraphDoc> {
    docs.iter().filter(move |d| d.header.split == split)
}

pub fn fit_norm(labeled: &[GraphDoc]) -> Result<NormStats> {
    for d in labeled {
        d.header.expect_role(&[Role::Labeled])?;
    }
    fit_normalization(of_split(labeled, Split::Train).map(|d| &d.graph))
}

fn samples(docs: &[GraphDoc], split: Split, norm: &NormStats) -> Result<Vec<Sample>> {
    let chosen: Vec<&GraphDoc> = of_split(docs, split).collect();
    chosen
        .par_iter()
        .map(|d| Sample::new(d.header.id.clone(), d.graph.clone(), norm))
        .collect()
}

pub fn train_model(
    labeled: &[GraphDoc],
    norm: &NormStats,
    config: ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainReport)> {
    for d in labeled {
        d.header.expect_role(&[Role::Labeled])?;
    }
    let train_set = samples(labeled, Split::Train, norm)?;
    let val = samples(labeled, Split::Val, norm)?;
    let mut model = Model::new(config)?;
    let mut adam = Adam::new(model.config.lr, model.param_count());
    let report = train(&mut model, &mut adam, &train_set, &val, norm, cfg)?;
    Ok((Checkpoint { model, adam, norm: norm.clone() }, report))
}

/// Model predictions for every graph, as `inferred` documents whose labels
/// hold the predicted deltas. Only node features are read.
pub fn predict_docs(ckpt: &Checkpoint, norm: &NormStats, docs: &[GraphDoc]) -> Result<Vec<GraphDoc>> {
    ckpt.check_norm(norm)?;
    docs.par_iter()
        .map(|d| {
            d.header.expect_role(&[Role::Labeled, Role::Inferred])?;
            let features = d
                .graph
                .features()
                .ok_or_else(|| Error::Consistency(format!("graph {} has no features", d.header.id)))?
                .to_vec();
            let base = d.graph.clone().without_annotations().with_features(features)?;
            let ig = infer(&ckpt.model, &base, norm)?;
            let mut header = d.header.clone();
            header.role = Role::Inferred;
            header.norm = Some(norm.fingerprint());
            header.post_delay = None;
            header.post_area = None;
            Ok(GraphDoc { header, graph: base.with_labels(ig.predicted().to_vec())? })
        })
        .collect()
}

/// Per-design `(id, delay, area)` reconstructed from inferred documents.
pub fn reconstruct_docs(inferred: &[GraphDoc]) -> Result<Vec<(String, f64, f64)>> {
    inferred
        .iter()
        .map(|d| {
            let ig = inferred_graph(d)?;
            let m = reconstruct_metrics(&ig);
            Ok((d.header.id.clone(), m.delay, m.area))
        })
        .collect()
}

pub fn inferred_graph(d: &GraphDoc) -> Result<InferredGraph> {
    d.header.expect_role(&[Role::Inferred, Role::Labeled])?;
    let labels = d
        .graph
        .labels()
        .ok_or_else(|| Error::Consistency(format!("graph {} carries no predictions", d.header.id)))?
        .to_vec();
    InferredGraph::new(d.graph.clone().without_labels(), labels)
}

/// Compares reconstructed predictions with the oracle's post-synthesis
/// metrics, alongside the pre-synthesis baseline.
pub fn evaluate(inferred: &[GraphDoc], labeled: &[GraphDoc]) -> Result<EvalSummary> {
    let mut designs = Vec::with_capacity(inferred.len());
    for d in inferred {
        let truth = labeled
            .iter()
            .find(|l| l.header.id == d.header.id)
            .ok_or_else(|| Error::Consistency(format!("no labeled graph for {}", d.header.id)))?;
        let gt_delay = truth.header.post_delay.ok_or_else(|| Error::Consistency(format!("{} lacks post delay", d.header.id)))?;
        let gt_area = truth.header.post_area.ok_or_else(|| Error::Consistency(format!("{} lacks post area", d.header.id)))?;
        let ig = inferred_graph(d)?;
        let pred = reconstruct_metrics(&ig);
        let zero = InferredGraph::new(ig.base().clone(), vec![LabelPair::default(); ig.base().len()])?;
        let base = reconstruct_metrics(&zero);
        designs.push(DesignEval {
            id: d.header.id.clone(),
            pred_delay: pred.delay,
            gt_delay,
            pred_area: pred.area,
            gt_area,
            base_delay: base.delay,
            base_area: base.area,
        });
    }
    EvalSummary::from_designs(designs)
}

/// Labeled documents re-tagged as predictions equal to their labels.
pub fn labels_as_predictions(labeled: &[GraphDoc]) -> Vec<GraphDoc> {
    labeled
        .iter()
        .map(|d| {
            let mut d = d.clone();
            d.header.role = Role::Inferred;
            d
        })
        .collect()
}

pub fn select_split(docs: Vec<GraphDoc>, split: Option<Split>) -> Vec<GraphDoc> {
    match split {
        Some(s) => docs.into_iter().filter(|d| d.header.split == s).collect(),
        None => docs,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(FileDigest { path: path.display().to_string(), sha256: hex(&Sha256::digest(&bytes)) })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance record written next to every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_seconds: f64,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Manifest {
    pub fn path_for(output: impl AsRef<Path>) -> std::path::PathBuf {
        let mut s = output.as_ref().as_os_str().to_owned();
        s.push(".manifest.json");
        s.into()
    }

    pub fn save(&self, output: impl AsRef<Path>) -> Result<()> {
        let path = Self::path_for(output);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Wall-clock helper for manifests.
pub struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch(Instant::now())
    }

    pub fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Convenience for tests and examples: all stages from generation to
/// labeled documents.
pub fn labeled_dataset(width: u32, counts: SplitCounts, root_seed: u64, lib: &CellLibrary, alpha: f64) -> Result<Vec<GraphDoc>> {
    let pre = gen_dataset(width, counts, root_seed, lib)?;
    let post = synth_docs(&pre, lib, alpha)?;
    label_docs(&pre, &post, lib)
}

pub fn graphs(docs: &[GraphDoc]) -> Vec<&CircuitGraph> {
    docs.iter().map(|d| &d.graph).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::default_library;
    use crate::physopt::DEFAULT_TARGET_ALPHA;

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a: Vec<u64> = (0..100).map(|i| sample_seed(0, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_eq!(sample_seed(0, 7), a[7]);
        assert_ne!(sample_seed(1, 7), a[7]);
    }

    #[test]
    fn proportional_split() {
        let c = SplitCounts::proportional(10);
        assert_eq!((c.train, c.val, c.test), (6, 2, 2));
        assert_eq!(c.split_of(5), Split::Train);
        assert_eq!(c.split_of(6), Split::Val);
        assert_eq!(c.split_of(8), Split::Test);
        assert_eq!(SplitCounts::proportional(7).total(), 7);
    }

    #[test]
    fn ground_truth_predictions_evaluate_to_zero_error() {
        let lib = default_library(0);
        let docs = labeled_dataset(8, SplitCounts::proportional(5), 3, &lib, DEFAULT_TARGET_ALPHA).unwrap();
        let s = evaluate(&labels_as_predictions(&docs), &docs).unwrap();
        assert!(s.delay_mae < 1e-6 && s.area_mae < 1e-6);
        assert!(s.baseline_delay_mae > 0.0 && s.baseline_area_mae > 0.0);
    }

    #[test]
    fn stages_check_fingerprints() {
        let lib = default_library(0);
        let pre = gen_dataset(4, SplitCounts::proportional(2), 0, &lib).unwrap();
        let err = synth_docs(&pre, &default_library(1), 0.6).unwrap_err();
        assert!(matches!(err, Error::Fingerprint { .. }));
        let post = synth_docs(&pre, &lib, 0.6).unwrap();
        assert!(label_docs(&post, &pre, &lib).is_err());
    }
}
