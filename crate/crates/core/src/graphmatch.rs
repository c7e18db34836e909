//! Attributed keypoint graphs matched by probabilistic relaxation labeling.
//!
//! Every gallery node `i` carries a distribution over probe labels `j`. Priors
//! are the row-normalized descriptor similarities. Each relaxation cycle
//! computes the contextual support
//!
//! ```text
//! Q[i][j] = P[i][j] * prod_{p != i} sum_q s_e(i, p, j, q) * P[p][q]
//! ```
//!
//! over gallery nodes `p` and probe nodes `q`, where `s_e` compares the
//! gallery edge length `|i p|` with the probe edge length `|j q|`, and then
//! renormalizes `P[i][j] * Q[i][j]` per row. Cycles stop once no entry moves
//! by `phi` or more.
//!
//! Supports are accumulated in the log domain so that large groups do not
//! underflow; each inner sum is floored at `epsilon_support` before the log.

use thiserror::Error;

use crate::exec::Exec;
use crate::keypoint::{descriptor_dot, Keypoint};

/// Above this many `(i, p, j, q)` entries the edge table is evaluated lazily.
const EDGE_TABLE_LIMIT: usize = 1 << 22;
/// Rows summing within this distance of 1 are accepted as stochastic.
const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph matching requires non-empty graphs (gallery {gallery} nodes, probe {probe} nodes)")]
    EmptyGraph { gallery: usize, probe: usize },
    #[error("edge similarity scale must be positive, got {0}")]
    EdgeScale(f64),
    #[error("invalid relaxation configuration: {0}")]
    Config(String),
    #[error("invalid probability matrix: {0}")]
    Probability(String),
    #[error(transparent)]
    Descriptor(#[from] crate::keypoint::KeypointError),
}

/// Complete graph over a keypoint group; edges carry pixel distances.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    nodes: Vec<Keypoint>,
    distances: Vec<f64>,
}

impl AttributedGraph {
    pub fn nodes(&self) -> &[Keypoint] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        let n = self.nodes.len();
        n * n.saturating_sub(1) / 2
    }

    /// Distance between nodes `i` and `p`; zero when `i == p`.
    #[inline]
    pub fn distance(&self, i: usize, p: usize) -> f64 {
        self.distances[i * self.nodes.len() + p]
    }

    /// Unordered edges `(i, p, distance)` with `i < p`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.nodes.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |p| (i, p, self.distance(i, p))))
    }
}

pub fn build_graph(group: &[Keypoint]) -> AttributedGraph {
    let n = group.len();
    let mut distances = vec![0.0; n * n];
    for i in 0..n {
        for p in i + 1..n {
            let d = group[i].distance_to(&group[p]);
            distances[i * n + p] = d;
            distances[p * n + i] = d;
        }
    }
    AttributedGraph {
        nodes: group.to_vec(),
        distances,
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

/// Row-stochastic label probabilities: row `i` is the distribution of gallery
/// node `i` over probe nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(Matrix);

impl ProbabilityMatrix {
    pub fn new(m: Matrix) -> Result<Self, GraphError> {
        if m.rows == 0 || m.cols == 0 {
            return Err(GraphError::Probability("matrix is empty".into()));
        }
        for i in 0..m.rows {
            let row = m.row(i);
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(GraphError::Probability(format!("row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(GraphError::Probability(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GraphError> {
        Self::new(Matrix::from_rows(rows))
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self(Matrix::filled(rows, cols, 1.0 / cols as f64))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn cols(&self) -> usize {
        self.0.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    pub fn max_abs_diff(&self, other: &ProbabilityMatrix) -> f64 {
        self.0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Index and value of the largest entry in row `i`; ties go to the lowest index.
    pub fn row_argmax(&self, i: usize) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (j, &v) in self.row(i).iter().enumerate() {
            if v > best.1 {
                best = (j, v);
            }
        }
        best
    }
}

/// `s[i][j]` = descriptor similarity of gallery node `i` and probe node `j`.
pub fn node_similarity_matrix(gallery: &AttributedGraph, probe: &AttributedGraph) -> Result<Matrix, GraphError> {
    check_nonempty(gallery, probe)?;
    let (n, m) = (gallery.node_count(), probe.node_count());
    let mut data = Vec::with_capacity(n * m);
    for a in &gallery.nodes {
        for b in &probe.nodes {
            data.push(descriptor_dot(&a.descriptor, &b.descriptor)?);
        }
    }
    Ok(Matrix { rows: n, cols: m, data })
}

/// `exp(-|d_gallery - d_probe| / sigma_e)`.
pub fn edge_similarity(d_gallery: f64, d_probe: f64, sigma_e: f64) -> Result<f64, GraphError> {
    if !(sigma_e.is_finite() && sigma_e > 0.0) {
        return Err(GraphError::EdgeScale(sigma_e));
    }
    Ok(edge_kernel(d_gallery, d_probe, sigma_e))
}

#[inline]
fn edge_kernel(d_gallery: f64, d_probe: f64, sigma_e: f64) -> f64 {
    (-(d_gallery - d_probe).abs() / sigma_e).exp()
}

fn check_nonempty(gallery: &AttributedGraph, probe: &AttributedGraph) -> Result<(), GraphError> {
    if gallery.is_empty() || probe.is_empty() {
        return Err(GraphError::EmptyGraph {
            gallery: gallery.node_count(),
            probe: probe.node_count(),
        });
    }
    Ok(())
}

/// Edge-pair similarities `s_e(i, p, j, q)` for a gallery/probe graph pair.
///
/// The "edge" `(j, j)` has length zero, so `s_e(i, p, j, j)` compares `|i p|`
/// against 0.
#[derive(Debug, Clone)]
pub struct EdgeCompatibility {
    n: usize,
    m: usize,
    kind: CompatKind,
}

#[derive(Debug, Clone)]
enum CompatKind {
    /// Indexed `((i * n + p) * m + j) * m + q`.
    Table(Vec<f64>),
    Lazy {
        gallery: Vec<f64>,
        probe: Vec<f64>,
        sigma_e: f64,
    },
}

impl EdgeCompatibility {
    pub fn from_graphs(gallery: &AttributedGraph, probe: &AttributedGraph, sigma_e: f64) -> Result<Self, GraphError> {
        if !(sigma_e.is_finite() && sigma_e > 0.0) {
            return Err(GraphError::EdgeScale(sigma_e));
        }
        let (n, m) = (gallery.node_count(), probe.node_count());
        let kind = if n * n * m * m <= EDGE_TABLE_LIMIT {
            let mut table = Vec::with_capacity(n * n * m * m);
            for i in 0..n {
                for p in 0..n {
                    let dg = gallery.distance(i, p);
                    for j in 0..m {
                        for q in 0..m {
                            table.push(edge_kernel(dg, probe.distance(j, q), sigma_e));
                        }
                    }
                }
            }
            CompatKind::Table(table)
        } else {
            CompatKind::Lazy {
                gallery: gallery.distances.clone(),
                probe: probe.distances.clone(),
                sigma_e,
            }
        };
        Ok(Self { n, m, kind })
    }

    /// Builds a compatibility from an explicit table indexed `[i][p][j][q]`.
    pub fn from_table(n: usize, m: usize, table: Vec<f64>) -> Result<Self, GraphError> {
        if table.len() != n * n * m * m {
            return Err(GraphError::Config(format!(
                "edge table has {} entries, expected {}",
                table.len(),
                n * n * m * m
            )));
        }
        if table.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GraphError::Config(
                "edge similarities must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            n,
            m,
            kind: CompatKind::Table(table),
        })
    }

    pub fn gallery_len(&self) -> usize {
        self.n
    }

    pub fn probe_len(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, p: usize, j: usize, q: usize) -> f64 {
        match &self.kind {
            CompatKind::Table(t) => t[((i * self.n + p) * self.m + j) * self.m + q],
            CompatKind::Lazy {
                gallery,
                probe,
                sigma_e,
            } => edge_kernel(gallery[i * self.n + p], probe[j * self.m + q], *sigma_e),
        }
    }

    /// `sum_q s_e(i, p, j, q) * row_p[q]`, ascending `q`.
    #[inline]
    fn weighted_sum(&self, i: usize, p: usize, j: usize, row_p: &[f64]) -> f64 {
        match &self.kind {
            CompatKind::Table(t) => {
                let base = ((i * self.n + p) * self.m + j) * self.m;
                t[base..base + self.m].iter().zip(row_p).map(|(s, pr)| s * pr).sum()
            }
            CompatKind::Lazy { .. } => (0..self.m).map(|q| self.get(i, p, j, q) * row_p[q]).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationConfig {
    /// Stop once the largest per-entry change falls below this.
    pub phi: f64,
    pub max_iterations: usize,
    /// Floor applied to each support sum before taking its logarithm.
    pub epsilon_support: f64,
    /// Length scale of the edge similarity kernel, in pixels.
    pub sigma_e: f64,
    /// Gallery nodes whose best posterior falls below this stay unassigned.
    pub min_posterior: f64,
    pub score_rule: ScoreRule,
}

/// How a relaxation outcome is reduced to a regional score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreRule {
    /// Mean assigned posterior maximum times the assigned fraction
    /// ([`graph_match_score`]).
    PosteriorCoverage,
    /// As `PosteriorCoverage`, with each assigned node's posterior also weighted
    /// by the descriptor similarity of the chosen pair
    /// ([`similarity_weighted_score`]).
    #[default]
    SimilarityWeighted,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self {
            phi: 1e-4,
            max_iterations: 50,
            epsilon_support: 1e-300,
            sigma_e: 10.0,
            min_posterior: 0.5,
            score_rule: ScoreRule::default(),
        }
    }
}

impl RelaxationConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        let err = |s: String| Err(GraphError::Config(s));
        if !(self.phi.is_finite() && self.phi > 0.0) {
            return err(format!("phi must be positive, got {}", self.phi));
        }
        if self.max_iterations < 1 {
            return err("max_iterations must be at least 1".into());
        }
        if !(self.epsilon_support.is_finite() && self.epsilon_support > 0.0) {
            return err(format!(
                "epsilon_support must be positive, got {}",
                self.epsilon_support
            ));
        }
        if !(self.sigma_e.is_finite() && self.sigma_e > 0.0) {
            return Err(GraphError::EdgeScale(self.sigma_e));
        }
        if !(0.0..=1.0).contains(&self.min_posterior) {
            return err(format!("min_posterior must lie in [0, 1], got {}", self.min_posterior));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationResult {
    pub prior: ProbabilityMatrix,
    pub posterior: ProbabilityMatrix,
    /// Probe label per gallery node, `None` when the best posterior is below `min_posterior`.
    pub assignment: Vec<Option<usize>>,
    pub iterations_used: usize,
    pub converged: bool,
    pub score: f64,
    /// Largest per-entry change of each cycle, in order.
    pub trace: Vec<f64>,
    /// Number of row resets caused by a numerically degenerate support row.
    pub reset_rows: usize,
    /// Descriptor similarities the priors were built from, when known.
    pub node_similarity: Option<Matrix>,
}

impl RelaxationResult {
    /// `iteration,max_delta` lines with a header.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,max_delta\n");
        for (k, d) in self.trace.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k + 1, d));
        }
        out
    }
}

/// Row-normalized similarities; an all-zero row becomes uniform.
pub fn priors_from_similarity(similarity: &Matrix) -> Result<ProbabilityMatrix, GraphError> {
    if similarity.rows == 0 || similarity.cols == 0 {
        return Err(GraphError::EmptyGraph {
            gallery: similarity.rows,
            probe: similarity.cols,
        });
    }
    if similarity.data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(GraphError::Probability(
            "similarities must be finite and non-negative".into(),
        ));
    }
    let m = similarity.cols;
    let mut data = Vec::with_capacity(similarity.data.len());
    for i in 0..similarity.rows {
        let row = similarity.row(i);
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            data.extend(row.iter().map(|v| v / sum));
        } else {
            data.extend(std::iter::repeat_n(1.0 / m as f64, m));
        }
    }
    Ok(ProbabilityMatrix(Matrix {
        rows: similarity.rows,
        cols: m,
        data,
    }))
}

/// Outcome of one relaxation cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationStep {
    pub next: ProbabilityMatrix,
    /// Rows that had to be reset to uniform.
    pub reset_rows: Vec<usize>,
}

/// Applies one support/renormalization cycle to `prob`.
pub fn relaxation_step(
    prob: &ProbabilityMatrix,
    compat: &EdgeCompatibility,
    epsilon_support: f64,
    exec: Exec,
) -> Result<RelaxationStep, GraphError> {
    let (n, m) = (prob.rows(), prob.cols());
    if compat.n != n || compat.m != m {
        return Err(GraphError::Config(format!(
            "edge table is {}x{} but probabilities are {n}x{m}",
            compat.n, compat.m
        )));
    }
    let floor_ln = epsilon_support.ln();
    let rows = exec.map_range(n, |i| {
        let mut ln_num = vec![f64::NEG_INFINITY; m];
        for (j, slot) in ln_num.iter_mut().enumerate() {
            let pij = prob.get(i, j);
            if pij <= 0.0 {
                continue;
            }
            let mut ln_support = 0.0;
            for p in (0..n).filter(|&p| p != i) {
                let s = compat.weighted_sum(i, p, j, prob.row(p));
                ln_support += if s > epsilon_support { s.ln() } else { floor_ln };
            }
            // P * Q, with Q itself carrying a factor P
            *slot = 2.0 * pij.ln() + ln_support;
        }
        normalize_log_row(&ln_num)
    });
    let mut data = Vec::with_capacity(n * m);
    let mut reset_rows = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Some(r) => data.extend(r),
            None => {
                reset_rows.push(i);
                data.extend(std::iter::repeat_n(1.0 / m as f64, m));
            }
        }
    }
    Ok(RelaxationStep {
        next: ProbabilityMatrix(Matrix { rows: n, cols: m, data }),
        reset_rows,
    })
}

fn normalize_log_row(ln_num: &[f64]) -> Option<Vec<f64>> {
    let max = ln_num.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let exps: Vec<f64> = ln_num.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    if !(sum.is_finite() && sum > 0.0) {
        return None;
    }
    Some(exps.into_iter().map(|e| (e / sum).min(1.0)).collect())
}

/// Runs relaxation cycles from `prior` until the stop rule or the iteration cap.
pub fn relax_from(
    prior: ProbabilityMatrix,
    compat: &EdgeCompatibility,
    cfg: &RelaxationConfig,
    exec: Exec,
) -> Result<RelaxationResult, GraphError> {
    cfg.validate()?;
    let mut current = prior.clone();
    let mut trace = Vec::new();
    let mut reset_rows = 0;
    let mut converged = false;
    while trace.len() < cfg.max_iterations {
        let step = relaxation_step(&current, compat, cfg.epsilon_support, exec)?;
        reset_rows += step.reset_rows.len();
        let delta = current.max_abs_diff(&step.next);
        trace.push(delta);
        current = step.next;
        if delta < cfg.phi {
            converged = true;
            break;
        }
    }
    let assignment = assign_labels(&current, cfg.min_posterior);
    let mut result = RelaxationResult {
        prior,
        posterior: current,
        assignment,
        iterations_used: trace.len(),
        converged,
        score: 0.0,
        trace,
        reset_rows,
        node_similarity: None,
    };
    result.score = graph_match_score(&result);
    Ok(result)
}

pub fn relax(
    gallery: &AttributedGraph,
    probe: &AttributedGraph,
    cfg: &RelaxationConfig,
) -> Result<RelaxationResult, GraphError> {
    relax_with(gallery, probe, cfg, Exec::Sequential)
}

/// [`relax`] with the per-row support computation spread according to `exec`.
pub fn relax_with(
    gallery: &AttributedGraph,
    probe: &AttributedGraph,
    cfg: &RelaxationConfig,
    exec: Exec,
) -> Result<RelaxationResult, GraphError> {
    cfg.validate()?;
    let similarity = node_similarity_matrix(gallery, probe)?;
    let prior = priors_from_similarity(&similarity)?;
    let compat = EdgeCompatibility::from_graphs(gallery, probe, cfg.sigma_e)?;
    let mut result = relax_from(prior, &compat, cfg, exec)?;
    if cfg.score_rule == ScoreRule::SimilarityWeighted {
        result.score = similarity_weighted_score(&result, &similarity)?;
    }
    result.node_similarity = Some(similarity);
    Ok(result)
}

fn assign_labels(posterior: &ProbabilityMatrix, min_posterior: f64) -> Vec<Option<usize>> {
    (0..posterior.rows())
        .map(|i| {
            let (j, v) = posterior.row_argmax(i);
            (v >= min_posterior).then_some(j)
        })
        .collect()
}

/// Per-node argmax label, or `None` when the maximum is below `min_posterior`.
/// Ties go to the lowest probe index.
pub fn assignment(result: &RelaxationResult, min_posterior: f64) -> Vec<Option<usize>> {
    assign_labels(&result.posterior, min_posterior)
}

fn score_from(
    posterior: &ProbabilityMatrix,
    assignment: &[Option<usize>],
    weight: impl Fn(usize, usize) -> f64,
) -> f64 {
    let n = assignment.len();
    let (count, total) = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|j| posterior.get(i, j) * weight(i, j)))
        .fold((0usize, 0.0), |(c, t), v| (c + 1, t + v));
    if count == 0 || n == 0 {
        return 0.0;
    }
    ((total / count as f64) * (count as f64 / n as f64)).clamp(0.0, 1.0)
}

/// Mean posterior maximum over assigned gallery nodes, scaled by the assigned fraction.
pub fn graph_match_score(result: &RelaxationResult) -> f64 {
    score_from(&result.posterior, &result.assignment, |_, _| 1.0)
}

/// [`graph_match_score`] with each assigned posterior multiplied by the
/// descriptor similarity of its gallery/probe pair.
///
/// Relaxation drives posteriors towards one-hot rows for any input, so the
/// posterior alone says little about how alike the matched descriptors are.
pub fn similarity_weighted_score(result: &RelaxationResult, similarity: &Matrix) -> Result<f64, GraphError> {
    if similarity.rows != result.posterior.rows() || similarity.cols != result.posterior.cols() {
        return Err(GraphError::Config(format!(
            "similarity is {}x{} but posterior is {}x{}",
            similarity.rows,
            similarity.cols,
            result.posterior.rows(),
            result.posterior.cols()
        )));
    }
    Ok(score_from(&result.posterior, &result.assignment, |i, j| {
        similarity.get(i, j)
    }))
}
