//! Gradient-boosted regression trees with exact greedy, second-order splits.
//!
//! Binary problems boost a single log-odds score; multiclass problems grow
//! one tree per class per round on softmax gradients. A split of node
//! samples into left/right scores
//!
//! ```text
//! gain = 1/2 * [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda) ] - gamma
//! ```
//!
//! and leaves take `-learning_rate * G / (H + lambda)`.

use std::fmt::Write as _;

use crate::error::{arg_err, Error, Result};
use crate::features::DesignMatrix;
use crate::linear::{fmt_f64, probs_from_logits};

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtHyper {
    pub max_depth: usize,
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    /// Rounds without validation improvement before stopping.
    pub patience: usize,
}

impl Default for GbdtHyper {
    fn default() -> Self {
        Self {
            max_depth: 3,
            n_rounds: 200,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            patience: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }] }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Index of the leaf a row lands in.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Node::Split { feature, threshold, left, right } = self.nodes[i] {
            i = if x[feature] <= threshold { left } else { right };
        }
        i
    }

    /// Same tree with nodes renumbered in pre-order.
    pub fn to_preorder(&self) -> Tree {
        fn go(src: &Tree, i: usize, out: &mut Vec<Node>) -> usize {
            let id = out.len();
            match src.nodes[i] {
                Node::Leaf { value } => out.push(Node::Leaf { value }),
                Node::Split { feature, threshold, left, right } => {
                    out.push(Node::Leaf { value: 0.0 });
                    let l = go(src, left, out);
                    let r = go(src, right, out);
                    out[id] = Node::Split { feature, threshold, left: l, right: r };
                }
            }
            id
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        go(self, 0, &mut nodes);
        Tree { nodes }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Trained,
    /// Training targets hold one class; the model predicts its prior only.
    SingleClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub n_classes: usize,
    pub width: usize,
    pub hyper: GbdtHyper,
    /// Initial raw score per logit.
    pub base_score: Vec<f64>,
    /// One entry per round, each with one tree per logit.
    pub trees: Vec<Vec<Tree>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtFit {
    pub model: GbdtModel,
    pub status: FitStatus,
    /// Mean train log loss before boosting and after each kept round.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

fn n_logits(n_classes: usize) -> usize {
    if n_classes == 2 {
        1
    } else {
        n_classes
    }
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, hyper: &GbdtHyper) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (gl * gl / (hl + hyper.lambda) + gr * gr / (hr + hyper.lambda) - g * g / (h + hyper.lambda))
        - hyper.gamma
}

#[derive(Clone)]
struct NodeScan {
    g: f64,
    h: f64,
    gl: f64,
    hl: f64,
    last: Option<f64>,
    best: Option<SplitChoice>,
}

/// Exact greedy split search for several nodes at once.
///
/// `node_of[s]` names the frontier slot of sample `s` (or `None`);
/// `sorted[f]` lists all samples in ascending order of feature `f`.
/// Ties keep the lowest feature, then the lowest threshold.
fn scan_frontier(
    design: &DesignMatrix,
    sorted: &[Vec<u32>],
    node_of: &[Option<usize>],
    totals: &[(f64, f64)],
    grad: &[f64],
    hess: &[f64],
    hyper: &GbdtHyper,
) -> Vec<Option<SplitChoice>> {
    let width = design.width();
    let x = design.features();
    let fresh: Vec<NodeScan> = totals
        .iter()
        .map(|&(g, h)| NodeScan { g, h, gl: 0.0, hl: 0.0, last: None, best: None })
        .collect();
    let mut best: Vec<Option<SplitChoice>> = vec![None; totals.len()];
    for (f, order) in sorted.iter().enumerate() {
        let mut scan = fresh.clone();
        for &s in order {
            let s = s as usize;
            let Some(slot) = node_of[s] else { continue };
            let st = &mut scan[slot];
            let v = x[s * width + f];
            if let Some(prev) = st.last {
                if v > prev {
                    let hr = st.h - st.hl;
                    if st.hl >= hyper.min_child_weight && hr >= hyper.min_child_weight {
                        let gain = split_gain(st.gl, st.hl, st.g, st.h, hyper);
                        if gain > 0.0 && st.best.map_or(true, |b| gain > b.gain) {
                            st.best = Some(SplitChoice { feature: f, threshold: 0.5 * (prev + v), gain });
                        }
                    }
                }
            }
            st.gl += grad[s];
            st.hl += hess[s];
            st.last = Some(v);
        }
        for (b, st) in best.iter_mut().zip(scan) {
            if let Some(c) = st.best {
                if b.map_or(true, |cur| c.gain > cur.gain) {
                    *b = Some(c);
                }
            }
        }
    }
    best
}

fn presort(design: &DesignMatrix) -> Vec<Vec<u32>> {
    let (n, w) = (design.n_samples(), design.width());
    let x = design.features();
    (0..w)
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| x[a as usize * w + f].total_cmp(&x[b as usize * w + f]));
            idx
        })
        .collect()
}

/// Best split of the node holding `samples`; `None` when no candidate has
/// positive gain with both children meeting `min_child_weight`.
pub fn best_split(
    design: &DesignMatrix,
    samples: &[usize],
    grad: &[f64],
    hess: &[f64],
    hyper: &GbdtHyper,
) -> Option<SplitChoice> {
    if samples.len() < 2 {
        return None;
    }
    let mut node_of = vec![None; design.n_samples()];
    let (mut g, mut h) = (0.0, 0.0);
    for &s in samples {
        node_of[s] = Some(0);
        g += grad[s];
        h += hess[s];
    }
    scan_frontier(design, &presort(design), &node_of, &[(g, h)], grad, hess, hyper)[0]
}

fn grow_tree(
    design: &DesignMatrix,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    hyper: &GbdtHyper,
) -> Tree {
    let n = design.n_samples();
    let width = design.width();
    let x = design.features();
    // placeholder leaves are overwritten below
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    // frontier slot -> node id
    let mut frontier: Vec<usize> = vec![0];
    let mut node_of: Vec<Option<usize>> = vec![Some(0); n];
    let mut totals = vec![(grad.iter().sum::<f64>(), hess.iter().sum::<f64>())];
    let leaf_value = |g: f64, h: f64| -hyper.learning_rate * g / (h + hyper.lambda);

    for depth in 0..=hyper.max_depth {
        if frontier.is_empty() {
            break;
        }
        let choices = if depth < hyper.max_depth {
            scan_frontier(design, sorted, &node_of, &totals, grad, hess, hyper)
        } else {
            vec![None; frontier.len()]
        };
        let mut next_frontier = Vec::new();
        let mut next_totals = Vec::new();
        // slot in current frontier -> (left slot, right slot) in the next one
        let mut remap: Vec<Option<(usize, usize, usize, f64)>> = vec![None; frontier.len()];
        for (slot, choice) in choices.iter().enumerate() {
            let id = frontier[slot];
            match choice {
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[id] = Node::Split { feature: c.feature, threshold: c.threshold, left, right: left + 1 };
                    let ls = next_frontier.len();
                    next_frontier.push(left);
                    next_frontier.push(left + 1);
                    next_totals.push((0.0, 0.0));
                    next_totals.push((0.0, 0.0));
                    remap[slot] = Some((ls, ls + 1, c.feature, c.threshold));
                }
                None => {
                    let (g, h) = totals[slot];
                    nodes[id] = Node::Leaf { value: leaf_value(g, h) };
                }
            }
        }
        for s in 0..n {
            let Some(slot) = node_of[s] else { continue };
            node_of[s] = match remap[slot] {
                Some((l, r, f, thr)) => {
                    let dst = if x[s * width + f] <= thr { l } else { r };
                    next_totals[dst].0 += grad[s];
                    next_totals[dst].1 += hess[s];
                    Some(dst)
                }
                None => None,
            };
        }
        frontier = next_frontier;
        totals = next_totals;
    }
    Tree { nodes }.to_preorder()
}

/// Gradient and hessian of the log loss at raw scores, per logit.
fn loss_derivatives(n_classes: usize, raw: &[f64], targets: &[u8], grad: &mut [Vec<f64>], hess: &mut [Vec<f64>]) {
    let nl = n_logits(n_classes);
    let mut p = vec![0.0; n_classes];
    for (i, &y) in targets.iter().enumerate() {
        probs_from_logits(&raw[i * nl..(i + 1) * nl], &mut p);
        if nl == 1 {
            grad[0][i] = p[1] - y as f64;
            hess[0][i] = p[1] * (1.0 - p[1]);
        } else {
            for k in 0..nl {
                grad[k][i] = p[k] - f64::from(u8::from(k == y as usize));
                hess[k][i] = p[k] * (1.0 - p[k]);
            }
        }
    }
}

/// Mean negative log-likelihood of targets under raw scores.
pub fn mean_log_loss(n_classes: usize, raw: &[f64], targets: &[u8]) -> f64 {
    let nl = n_logits(n_classes);
    let mut total = 0.0;
    for (i, &y) in targets.iter().enumerate() {
        let z = &raw[i * nl..(i + 1) * nl];
        total += if nl == 1 {
            let s = if y == 1 { -z[0] } else { z[0] };
            // log(1 + e^s)
            if s > 0.0 {
                s + (-s).exp().ln_1p()
            } else {
                s.exp().ln_1p()
            }
        } else {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - z[y as usize]
        };
    }
    total / targets.len().max(1) as f64
}

fn base_scores(n_classes: usize, targets: &[u8]) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &y in targets {
        counts[y as usize] += 1;
    }
    let n = targets.len().max(1) as f64;
    let prior = |k: usize| (counts[k] as f64 / n).clamp(1e-6, 1.0 - 1e-6);
    if n_classes == 2 {
        let p = prior(1);
        vec![(p / (1.0 - p)).ln()]
    } else {
        (0..n_classes).map(|k| prior(k).ln()).collect()
    }
}

pub fn fit_gbdt(design: &DesignMatrix, hyper: &GbdtHyper) -> Result<GbdtFit> {
    fit_gbdt_with_validation(design, None, hyper)
}

/// Boosts on `design`. With `val`, stops after `hyper.patience` rounds without
/// improving validation log loss and keeps the best prefix of rounds.
pub fn fit_gbdt_with_validation(
    design: &DesignMatrix,
    val: Option<&DesignMatrix>,
    hyper: &GbdtHyper,
) -> Result<GbdtFit> {
    if design.n_samples() < 2 {
        return arg_err("boosting needs at least two samples");
    }
    if !(hyper.lambda >= 0.0) || !(hyper.learning_rate > 0.0) || !(hyper.min_child_weight >= 0.0) {
        return arg_err("lambda, min_child_weight must be >= 0 and learning_rate > 0");
    }
    if let Some(v) = val {
        if v.width() != design.width() {
            return arg_err("validation width differs from training width");
        }
    }
    let k = design.n_classes();
    let nl = n_logits(k);
    let n = design.n_samples();
    let targets = design.targets();
    let base_score = base_scores(k, targets);
    let mut model = GbdtModel { n_classes: k, width: design.width(), hyper: hyper.clone(), base_score, trees: Vec::new() };

    let mut raw: Vec<f64> = (0..n).flat_map(|_| model.base_score.clone()).collect();
    let mut train_loss = vec![mean_log_loss(k, &raw, targets)];
    let present = {
        let mut seen = vec![false; k];
        targets.iter().for_each(|&y| seen[y as usize] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if present < 2 {
        return Ok(GbdtFit { model, status: FitStatus::SingleClass, train_loss, val_loss: Vec::new() });
    }

    let mut val_raw: Option<Vec<f64>> = val.map(|v| (0..v.n_samples()).flat_map(|_| model.base_score.clone()).collect());
    let mut val_loss = Vec::new();
    if let (Some(v), Some(vr)) = (val, &val_raw) {
        val_loss.push(mean_log_loss(k, vr, v.targets()));
    }
    let mut best_round = 0usize;
    let sorted = presort(design);
    let mut grad = vec![vec![0.0; n]; nl];
    let mut hess = vec![vec![0.0; n]; nl];

    for round in 0..hyper.n_rounds {
        loss_derivatives(k, &raw, targets, &mut grad, &mut hess);
        let trees: Vec<Tree> = (0..nl).map(|c| grow_tree(design, &sorted, &grad[c], &hess[c], hyper)).collect();
        for (i, x) in design.rows().enumerate() {
            for (c, t) in trees.iter().enumerate() {
                raw[i * nl + c] += t.predict_row(x);
            }
        }
        train_loss.push(mean_log_loss(k, &raw, targets));
        if let (Some(v), Some(vr)) = (val, val_raw.as_mut()) {
            for (i, x) in v.rows().enumerate() {
                for (c, t) in trees.iter().enumerate() {
                    vr[i * nl + c] += t.predict_row(x);
                }
            }
            let l = mean_log_loss(k, vr, v.targets());
            val_loss.push(l);
            model.trees.push(trees);
            if l < val_loss[best_round] {
                best_round = round + 1;
            } else if round + 1 - best_round > hyper.patience {
                break;
            }
        } else {
            model.trees.push(trees);
        }
    }
    if val.is_some() {
        model.trees.truncate(best_round);
        train_loss.truncate(best_round + 1);
    }
    if train_loss.iter().any(|l| !l.is_finite()) {
        return Err(Error::Divergence("boosting produced a non-finite loss".into()));
    }
    Ok(GbdtFit { model, status: FitStatus::Trained, train_loss, val_loss })
}

impl GbdtModel {
    /// Raw scores (base plus every tree) for one row.
    pub fn raw_row(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.base_score.clone();
        for round in &self.trees {
            for (c, t) in round.iter().enumerate() {
                z[c] += t.predict_row(x);
            }
        }
        z
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    /// Pre-order plain-text dump, numbers with 17 significant digits.
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let mut s = String::from("droughtcast-gbdt\nversion=1\n");
        let _ = writeln!(s, "n_classes={}", self.n_classes);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "max_depth={}", h.max_depth);
        let _ = writeln!(s, "n_rounds={}", h.n_rounds);
        let _ = writeln!(s, "learning_rate={}", fmt_f64(h.learning_rate));
        let _ = writeln!(s, "lambda={}", fmt_f64(h.lambda));
        let _ = writeln!(s, "gamma={}", fmt_f64(h.gamma));
        let _ = writeln!(s, "min_child_weight={}", fmt_f64(h.min_child_weight));
        let _ = writeln!(s, "patience={}", h.patience);
        let base: Vec<String> = self.base_score.iter().map(|&b| fmt_f64(b)).collect();
        let _ = writeln!(s, "base_score={}", base.join(" "));
        let _ = writeln!(s, "rounds={}", self.trees.len());
        for (r, round) in self.trees.iter().enumerate() {
            for (c, tree) in round.iter().enumerate() {
                let _ = writeln!(s, "tree round={r} class={c}");
                dump_node(tree, 0, &mut s);
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        if lines.next() != Some("droughtcast-gbdt") {
            return Err(bad("not a boosted-tree dump"));
        }
        let mut header = Vec::new();
        while let Some(l) = lines.peek() {
            if l.starts_with("tree ") {
                break;
            }
            let (k, v) = l.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            header.push((k.to_string(), v.to_string()));
            lines.next();
        }
        let get = |k: &str| {
            header.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str()).ok_or_else(|| bad(&format!("missing {k}")))
        };
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
        let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
        let version = int("version")? as u32;
        if version != 1 {
            return Err(Error::UnsupportedVersion { found: version, expected: 1 });
        }
        let n_classes = int("n_classes")?;
        let hyper = GbdtHyper {
            max_depth: int("max_depth")?,
            n_rounds: int("n_rounds")?,
            learning_rate: num("learning_rate")?,
            lambda: num("lambda")?,
            gamma: num("gamma")?,
            min_child_weight: num("min_child_weight")?,
            patience: int("patience")?,
        };
        let base_score = get("base_score")?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad("bad base_score")))
            .collect::<Result<Vec<f64>>>()?;
        let nl = n_logits(n_classes);
        if base_score.len() != nl {
            return Err(Error::Corrupt("base_score length does not match classes".into()));
        }
        let rounds = int("rounds")?;
        let mut trees = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let mut round = Vec::with_capacity(nl);
            for _ in 0..nl {
                match lines.next() {
                    Some(l) if l.starts_with("tree ") => {}
                    _ => return Err(Error::Corrupt("expected tree header".into())),
                }
                let mut nodes = Vec::new();
                parse_node(&mut lines, &mut nodes)?;
                round.push(Tree { nodes });
            }
            trees.push(round);
        }
        Ok(Self { n_classes, width: int("width")?, hyper, base_score, trees })
    }
}

fn dump_node(tree: &Tree, i: usize, out: &mut String) {
    match tree.nodes[i] {
        Node::Leaf { value } => {
            let _ = writeln!(out, "leaf value={}", fmt_f64(value));
        }
        Node::Split { feature, threshold, left, right } => {
            let _ = writeln!(out, "split feature={feature} threshold={}", fmt_f64(threshold));
            dump_node(tree, left, out);
            dump_node(tree, right, out);
        }
    }
}

fn parse_node<'a>(lines: &mut impl Iterator<Item = &'a str>, nodes: &mut Vec<Node>) -> Result<usize> {
    let line = lines.next().ok_or_else(|| Error::Corrupt("tree dump truncated".into()))?;
    let field = |name: &str| -> Result<&str> {
        line.split_whitespace()
            .find_map(|tok| tok.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| Error::Corrupt(format!("missing {name} in {line:?}")))
    };
    let id = nodes.len();
    if line.starts_with("leaf") {
        let value = field("value")?.parse().map_err(|_| Error::Corrupt("bad leaf value".into()))?;
        nodes.push(Node::Leaf { value });
    } else if line.starts_with("split") {
        let feature = field("feature")?.parse().map_err(|_| Error::Corrupt("bad feature".into()))?;
        let threshold = field("threshold")?.parse().map_err(|_| Error::Corrupt("bad threshold".into()))?;
        nodes.push(Node::Leaf { value: 0.0 });
        let left = parse_node(lines, nodes)?;
        let right = parse_node(lines, nodes)?;
        nodes[id] = Node::Split { feature, threshold, left, right };
    } else {
        return Err(Error::Corrupt(format!("unexpected line {line:?}")));
    }
    Ok(id)
}

/// Per-sample class probabilities; rows sum to one.
pub fn predict_gbdt(model: &GbdtModel, design: &DesignMatrix) -> Result<Vec<Vec<f64>>> {
    if design.width() != model.width {
        return arg_err(format!("design width {} != model width {}", design.width(), model.width));
    }
    Ok(design
        .rows()
        .map(|x| {
            let z = model.raw_row(x);
            let mut p = vec![0.0; model.n_classes];
            probs_from_logits(&z, &mut p);
            p
        })
        .collect())
}
