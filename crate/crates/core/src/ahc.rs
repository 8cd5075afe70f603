//! Adjacent hierarchical clustering over a training tiling.
//!
//! Only clusters whose members lie within `k` tiles of each other may merge.
//! When the cheapest admissible merge is cheaper than the previous one, the
//! most recent offending merge is undone and clustering resumes from there.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{AndriError, Result};
use crate::series::{mean, std_dev, DistanceKind, Subsequence};

/// A set of tiling positions, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub representative_time: usize,
}

impl Cluster {
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(AndriError::EmptyInput("cluster has no members".into()));
        }
        members.sort_unstable();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(AndriError::OverlapError(w[0]));
        }
        let representative_time = members[members.len() / 2];
        Ok(Cluster {
            members,
            representative_time,
        })
    }

    pub fn singleton(index: usize) -> Self {
        Cluster {
            members: vec![index],
            representative_time: index,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn start(&self) -> usize {
        self.members[0]
    }

    /// Smallest distance in tiling positions between a member of each cluster.
    pub fn gap(&self, other: &Cluster) -> usize {
        sorted_gap(&self.members, &other.members)
    }
}

fn sorted_gap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j) = (0, 0);
    let mut best = usize::MAX;
    while i < a.len() && j < b.len() {
        best = best.min(a[i].abs_diff(b[j]));
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    best
}

/// How the dendrogram is cut into final clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffRule {
    /// Jump threshold is mean + std of the other height jumps on the
    /// leaf-to-root path.
    #[default]
    PathSpread,
    /// Jump threshold is mean + std of the jumps preceding the candidate.
    PrefixSpread,
    /// `(sum of heights - mean jump) / j`, used as a spread term.
    PrintedVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhcConfig {
    pub k: usize,
    pub r_min: f64,
    #[serde(default)]
    pub cutoff: CutoffRule,
    /// Disable to get plain adjacency-constrained Ward clustering.
    #[serde(default = "default_true")]
    pub reversion: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AhcConfig {
    fn default() -> Self {
        AhcConfig {
            k: 1,
            r_min: 0.01,
            cutoff: CutoffRule::PathSpread,
            reversion: true,
        }
    }
}

impl AhcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(AndriError::BadParam("k must be at least 1".into()));
        }
        if !(self.r_min > 0.0 && self.r_min < 1.0) {
            return Err(AndriError::BadParam(format!(
                "r_min must lie in (0, 1), got {}",
                self.r_min
            )));
        }
        Ok(())
    }
}

/// Smallest cluster size that may source a normal pattern.
pub fn min_pattern_size(r_min: f64, count: usize) -> usize {
    ((r_min * count as f64).ceil() as usize).max(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelKind {
    Merge,
    Revert,
}

/// One step of the clustering. `left`, `right` and `node` are node ids;
/// use [`Dendrogram::members`] to resolve them.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub kind: LevelKind,
    pub left: usize,
    pub right: usize,
    /// The merged node, or the node that was dissolved.
    pub node: usize,
    /// Linkage of the merge (for reverts, of the merge being undone).
    pub linkage: f64,
    /// Linkage of the cheaper merge that caused a revert.
    pub trigger: Option<f64>,
    /// Level number of the merge a revert undid.
    pub undid: Option<usize>,
}

impl Level {
    pub fn reverted(&self) -> bool {
        self.kind == LevelKind::Revert
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    members: Vec<usize>,
    children: Option<(usize, usize)>,
    linkage: f64,
    height: f64,
    level: usize,
    sum: Vec<f64>,
}

/// Audit log of an AHC run. Level 0 is the singleton clustering; level
/// `j >= 1` is `levels()[j - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n_leaves: usize,
    k: usize,
    nodes: Vec<Node>,
    levels: Vec<Level>,
    roots: Vec<usize>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn members(&self, node: usize) -> &[usize] {
        &self.nodes[node].members
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        self.nodes[node].children
    }

    /// Cophenetic height: the running maximum of linkages when the node formed.
    pub fn height(&self, node: usize) -> f64 {
        self.nodes[node].height
    }

    /// Final top-level nodes, ordered by first member.
    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    /// Clustering after `level` steps, replayed from the log.
    pub fn clustering(&self, level: usize) -> Result<Vec<Cluster>> {
        if level > self.levels.len() {
            return Err(AndriError::InvalidLevel(level));
        }
        let mut live: BTreeMap<usize, usize> = (0..self.n_leaves).map(|i| (i, i)).collect();
        for lv in &self.levels[..level] {
            apply_level(&self.nodes, &mut live, lv);
        }
        Ok(live
            .values()
            .map(|&id| cluster_of(&self.nodes[id].members))
            .collect())
    }

    /// One line per level: `level,left,right,linkage,reverted`. Members are
    /// space separated. Revert lines carry the linkage that triggered them.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, lv) in self.levels.iter().enumerate() {
            let join = |id: usize| {
                self.nodes[id]
                    .members
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let linkage = match lv.kind {
                LevelKind::Merge => lv.linkage,
                LevelKind::Revert => lv.trigger.unwrap_or(lv.linkage),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                join(lv.left),
                join(lv.right),
                linkage,
                u8::from(lv.reverted())
            );
        }
        out
    }
}

fn cluster_of(members: &[usize]) -> Cluster {
    Cluster {
        members: members.to_vec(),
        representative_time: members[members.len() / 2],
    }
}

fn apply_level(nodes: &[Node], live: &mut BTreeMap<usize, usize>, lv: &Level) {
    let first = |id: usize| nodes[id].members[0];
    match lv.kind {
        LevelKind::Merge => {
            live.remove(&first(lv.left));
            live.remove(&first(lv.right));
            live.insert(first(lv.node), lv.node);
        }
        LevelKind::Revert => {
            live.remove(&first(lv.node));
            live.insert(first(lv.left), lv.left);
            live.insert(first(lv.right), lv.right);
        }
    }
}

fn ward(a: &Node, b: &Node) -> f64 {
    let (na, nb) = (a.members.len() as f64, b.members.len() as f64);
    let ss: f64 = a
        .sum
        .iter()
        .zip(&b.sum)
        .map(|(x, y)| {
            let d = x / na - y / nb;
            d * d
        })
        .sum();
    na * nb / (na + nb) * ss
}

/// Ward linkage between two disjoint clusters of `data`.
pub fn linkage_distance(
    a: &Cluster,
    b: &Cluster,
    data: &[Subsequence],
    kind: DistanceKind,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(AndriError::EmptyInput("linkage of an empty cluster".into()));
    }
    if let Some(&m) = a
        .members
        .iter()
        .find(|m| b.members.binary_search(m).is_ok())
    {
        return Err(AndriError::OverlapError(m));
    }
    let node = |c: &Cluster| -> Result<Node> {
        let mut sum: Vec<f64> = Vec::new();
        for &m in &c.members {
            let s = data.get(m).ok_or_else(|| {
                AndriError::BadParam(format!("member {m} outside data of length {}", data.len()))
            })?;
            let v = kind.transform(&s.values);
            if sum.is_empty() {
                sum = v;
            } else if sum.len() != v.len() {
                return Err(AndriError::LengthMismatch {
                    left: sum.len(),
                    right: v.len(),
                });
            } else {
                sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
            }
        }
        Ok(Node {
            members: c.members.clone(),
            children: None,
            linkage: 0.0,
            height: 0.0,
            level: 0,
            sum,
        })
    };
    let (na, nb) = (node(a)?, node(b)?);
    if na.sum.len() != nb.sum.len() {
        return Err(AndriError::LengthMismatch {
            left: na.sum.len(),
            right: nb.sum.len(),
        });
    }
    Ok(ward(&na, &nb))
}

/// Index pairs `(i, j)`, `i < j`, of clusters within `k` tiling positions.
pub fn knn_adjacent_pairs(clusters: &[Cluster], k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            if clusters[i].gap(&clusters[j]) <= k {
                out.push((i, j));
            }
        }
    }
    out
}

struct Engine {
    n: usize,
    k: usize,
    nodes: Vec<Node>,
    levels: Vec<Level>,
    live: BTreeMap<usize, usize>,
    owner: Vec<usize>,
    surviving: Vec<usize>,
    cache: HashMap<(usize, usize), f64>,
    running_max: f64,
    reversion: bool,
    steps: usize,
    step_cap: usize,
}

impl Engine {
    fn new(vectors: Vec<Vec<f64>>, k: usize, reversion: bool) -> Self {
        let n = vectors.len();
        let nodes = vectors
            .into_iter()
            .enumerate()
            .map(|(i, sum)| Node {
                members: vec![i],
                children: None,
                linkage: 0.0,
                height: 0.0,
                level: 0,
                sum,
            })
            .collect();
        Engine {
            n,
            k,
            nodes,
            levels: Vec::new(),
            live: (0..n).map(|i| (i, i)).collect(),
            owner: (0..n).collect(),
            surviving: Vec::new(),
            cache: HashMap::new(),
            running_max: 0.0,
            reversion,
            steps: 0,
            step_cap: 50 * n + 1000,
        }
    }

    /// Rebuild the state after the first `upto` levels of `d`.
    fn replay(d: &Dendrogram, upto: usize, reversion: bool) -> Self {
        let merges = d.levels[..upto]
            .iter()
            .filter(|l| l.kind == LevelKind::Merge)
            .count();
        let mut e = Engine {
            n: d.n_leaves,
            k: d.k,
            nodes: d.nodes[..d.n_leaves + merges].to_vec(),
            levels: Vec::new(),
            live: (0..d.n_leaves).map(|i| (i, i)).collect(),
            owner: (0..d.n_leaves).collect(),
            surviving: Vec::new(),
            cache: HashMap::new(),
            running_max: 0.0,
            reversion,
            steps: 0,
            step_cap: 50 * d.n_leaves + 1000,
        };
        for lv in &d.levels[..upto] {
            apply_level(&e.nodes, &mut e.live, lv);
            match lv.kind {
                LevelKind::Merge => {
                    e.surviving.push(lv.node);
                    e.set_owner(lv.node);
                }
                LevelKind::Revert => {
                    e.surviving.retain(|&z| z != lv.node);
                    e.set_owner(lv.left);
                    e.set_owner(lv.right);
                }
            }
            e.running_max = e.running_max.max(lv.linkage);
            e.levels.push(lv.clone());
        }
        e
    }

    fn set_owner(&mut self, id: usize) {
        for &m in &self.nodes[id].members {
            self.owner[m] = id;
        }
    }

    fn link(&mut self, a: usize, b: usize) -> f64 {
        let key = (a.min(b), a.max(b));
        if let Some(&d) = self.cache.get(&key) {
            return d;
        }
        let d = ward(&self.nodes[a], &self.nodes[b]);
        self.cache.insert(key, d);
        d
    }

    fn gap(&self, a: usize, b: usize) -> usize {
        sorted_gap(&self.nodes[a].members, &self.nodes[b].members)
    }

    fn first(&self, id: usize) -> usize {
        self.nodes[id].members[0]
    }

    /// Cheapest admissible pair, ties going to the smallest left start.
    fn best_pair(&mut self) -> Option<(usize, usize, f64)> {
        let mut pairs = Vec::new();
        for t in 0..self.n {
            for d in 1..=self.k.min(self.n - 1 - t) {
                let (a, b) = (self.owner[t], self.owner[t + d]);
                if a != b {
                    let (fa, fb) = (self.first(a), self.first(b));
                    pairs.push(if fa < fb {
                        (fa, fb, a, b)
                    } else {
                        (fb, fa, b, a)
                    });
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut best: Option<(usize, usize, f64)> = None;
        for (_, _, a, b) in pairs {
            let d = self.link(a, b);
            if best.is_none_or(|(_, _, bd)| d < bd) {
                best = Some((a, b, d));
            }
        }
        best
    }

    fn merge(&mut self, a: usize, b: usize, d: f64) {
        let mut members = self.nodes[a].members.clone();
        members.extend_from_slice(&self.nodes[b].members);
        members.sort_unstable();
        let sum = self.nodes[a]
            .sum
            .iter()
            .zip(&self.nodes[b].sum)
            .map(|(x, y)| x + y)
            .collect();
        self.running_max = self.running_max.max(d);
        let id = self.nodes.len();
        self.nodes.push(Node {
            members,
            children: Some((a, b)),
            linkage: d,
            height: self.running_max,
            level: self.levels.len() + 1,
            sum,
        });
        self.live.remove(&self.first(a));
        self.live.remove(&self.first(b));
        self.live.insert(self.first(id), id);
        self.set_owner(id);
        self.surviving.push(id);
        self.levels.push(Level {
            kind: LevelKind::Merge,
            left: a,
            right: b,
            node: id,
            linkage: d,
            trigger: None,
            undid: None,
        });
    }

    fn revert(&mut self, z: usize, trigger: f64) -> (usize, usize) {
        let (a, b) = self.nodes[z].children.expect("revert of a leaf");
        self.live.remove(&self.first(z));
        self.live.insert(self.first(a), a);
        self.live.insert(self.first(b), b);
        self.set_owner(a);
        self.set_owner(b);
        self.surviving.retain(|&s| s != z);
        self.levels.push(Level {
            kind: LevelKind::Revert,
            left: a,
            right: b,
            node: z,
            linkage: self.nodes[z].linkage,
            trigger: Some(trigger),
            undid: Some(self.nodes[z].level),
        });
        (a, b)
    }

    fn prev_linkage(&self) -> Option<f64> {
        self.surviving.last().map(|&z| self.nodes[z].linkage)
    }

    /// Undo the latest offending merge inside `a` or `b`. Returns false when
    /// there is nothing to undo and the pair should merge as is.
    fn revise(&mut self, a: usize, b: usize, d: f64) -> bool {
        let z = [a, b]
            .into_iter()
            .filter(|&c| self.nodes[c].children.is_some() && self.nodes[c].linkage > d)
            .max();
        let Some(z) = z else {
            return false;
        };
        let o = if z == a { b } else { a };
        let (c1, c2) = self.revert(z, d);
        let key = |e: &Self, c: usize| (e.gap(o, c), e.first(c));
        let (near, far) = if key(self, c1) <= key(self, c2) {
            (c1, c2)
        } else {
            (c2, c1)
        };
        let d_far = self.link(o, far);
        let d_near = self.link(o, near);
        if d_far < d_near {
            let (l, r) = if self.first(o) < self.first(far) {
                (o, far)
            } else {
                (far, o)
            };
            self.merge(l, r, d_far);
        }
        true
    }

    fn step(&mut self, a: usize, b: usize, d: f64) {
        self.steps += 1;
        let monotone = self.prev_linkage().is_none_or(|p| d >= p);
        if monotone || !self.reversion || self.steps > self.step_cap || !self.revise(a, b, d) {
            self.merge(a, b, d);
        }
    }

    fn run(&mut self) {
        while self.live.len() > 1 {
            let Some((a, b, d)) = self.best_pair() else {
                break;
            };
            self.step(a, b, d);
        }
    }

    fn finish(self) -> Dendrogram {
        Dendrogram {
            n_leaves: self.n,
            k: self.k,
            roots: self.live.values().copied().collect(),
            nodes: self.nodes,
            levels: self.levels,
        }
    }
}

fn transformed(data: &[Subsequence], kind: DistanceKind) -> Result<Vec<Vec<f64>>> {
    if data.is_empty() {
        return Err(AndriError::EmptyInput("no subsequences to cluster".into()));
    }
    let len = data[0].len();
    data.iter()
        .map(|s| {
            if s.len() != len {
                return Err(AndriError::LengthMismatch {
                    left: len,
                    right: s.len(),
                });
            }
            Ok(kind.transform(&s.values))
        })
        .collect()
}

/// Build the complete dendrogram without cutting it.
pub fn build_dendrogram(
    data: &[Subsequence],
    config: &AhcConfig,
    kind: DistanceKind,
) -> Result<Dendrogram> {
    config.validate()?;
    let mut engine = Engine::new(transformed(data, kind)?, config.k, config.reversion);
    engine.run();
    Ok(engine.finish())
}

/// Cluster `data` and cut the resulting dendrogram.
pub fn run_ahc(
    data: &[Subsequence],
    config: &AhcConfig,
    kind: DistanceKind,
) -> Result<(Vec<Cluster>, Dendrogram)> {
    let d = build_dendrogram(data, config, kind)?;
    Ok((find_cutoff_with(&d, config.cutoff), d))
}

/// Re-run `dendrogram` from just before `level`, revising instead of
/// performing the merge recorded there. The result is run to completion.
pub fn revise_clusters(dendrogram: &Dendrogram, level: usize) -> Result<Dendrogram> {
    if level == 0 || level > dendrogram.levels.len() {
        return Err(AndriError::InvalidLevel(level));
    }
    let lv = &dendrogram.levels[level - 1];
    if lv.kind != LevelKind::Merge {
        return Err(AndriError::InvalidLevel(level));
    }
    let mut engine = Engine::replay(dendrogram, level - 1, true);
    match engine.prev_linkage() {
        Some(p) if lv.linkage < p => {}
        _ => return Err(AndriError::InvalidLevel(level)),
    }
    if !engine.revise(lv.left, lv.right, lv.linkage) {
        return Err(AndriError::InvalidLevel(level));
    }
    engine.run();
    Ok(engine.finish())
}

/// Cut with the default rule.
pub fn find_cutoff(dendrogram: &Dendrogram) -> Vec<Cluster> {
    find_cutoff_with(dendrogram, CutoffRule::PathSpread)
}

/// First index `j >= 1` whose jump exceeds the rule's threshold.
fn cut_index(heights: &[f64], rule: CutoffRule) -> Option<usize> {
    let mut jumps = Vec::with_capacity(heights.len());
    let mut last = 0.0;
    for &h in heights {
        jumps.push(h - last);
        last = h;
    }
    match rule {
        CutoffRule::PathSpread => (1..jumps.len()).find(|&j| {
            let others: Vec<f64> = jumps
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, &x)| x)
                .collect();
            jumps[j] > mean(&others) + std_dev(&others)
        }),
        CutoffRule::PrefixSpread => (2..jumps.len()).find(|&j| {
            let prior = &jumps[..j];
            jumps[j] > mean(prior) + std_dev(prior)
        }),
        CutoffRule::PrintedVariance => (2..jumps.len()).find(|&j| {
            let prior = &jumps[..j];
            let var = (heights[..j].iter().sum::<f64>() - mean(prior)) / j as f64;
            jumps[j] > mean(prior) + var.max(0.0).sqrt()
        }),
    }
}

/// Cut each leaf's ancestor path where the height jump stands out, then
/// take the largest subtrees whose leaves all agree on the cut.
pub fn find_cutoff_with(dendrogram: &Dendrogram, rule: CutoffRule) -> Vec<Cluster> {
    let n = dendrogram.n_leaves;
    let nodes = &dendrogram.nodes;
    let mut parent = vec![usize::MAX; nodes.len()];
    let mut stack: Vec<usize> = dendrogram.roots.clone();
    let mut order = Vec::new();
    while let Some(v) = stack.pop() {
        order.push(v);
        if let Some((a, b)) = nodes[v].children {
            parent[a] = v;
            parent[b] = v;
            stack.push(a);
            stack.push(b);
        }
    }

    // Size of the node each leaf picks; every pick lies on the leaf's path.
    let mut limit = vec![1usize; n];
    for (leaf, lim) in limit.iter_mut().enumerate() {
        let mut path = Vec::new();
        let mut v = leaf;
        while parent[v] != usize::MAX {
            v = parent[v];
            path.push(v);
        }
        if path.is_empty() {
            continue;
        }
        let heights: Vec<f64> = path.iter().map(|&p| nodes[p].height).collect();
        let pick = match cut_index(&heights, rule) {
            Some(j) => path[j - 1],
            None => *path.last().unwrap(),
        };
        *lim = nodes[pick].members.len();
    }

    // Bottom-up minimum of the leaves' limits.
    let mut min_limit = vec![usize::MAX; nodes.len()];
    for &v in order.iter().rev() {
        min_limit[v] = match nodes[v].children {
            None => limit[v],
            Some((a, b)) => min_limit[a].min(min_limit[b]),
        };
    }

    let mut out = Vec::new();
    let mut stack: Vec<usize> = dendrogram.roots.clone();
    while let Some(v) = stack.pop() {
        let ok = nodes[v].members.len() <= min_limit[v];
        match nodes[v].children {
            Some((a, b)) if !ok => {
                stack.push(a);
                stack.push(b);
            }
            _ => out.push(cluster_of(&nodes[v].members)),
        }
    }
    out.sort_by_key(|c| c.start());
    out
}
