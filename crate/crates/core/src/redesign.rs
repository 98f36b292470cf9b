//! Exhaustive search over x-axis orders for the one that best shows the
//! desired groups while suppressing the rest.
//!
//! A permutation scores `alpha * s_d - (1 - alpha) * s_v`, where `s_d` sums the
//! probabilities of detected desired groups and `s_v` counts violations.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{self, Chart, ChartError};
use crate::diagnose::{self, DiagnoseConfig, DiagnoseError, DiagnosisReport, Hit};
use crate::features::Group;
use crate::model::GroupingModel;

/// Default cap on the number of orders examined: 10!.
pub const DEFAULT_PERMUTATION_BUDGET: u128 = 3_628_800;
pub const LANDSCAPE_EXEMPLARS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RedesignError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Diagnose(#[from] DiagnoseError),
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error(
        "{count} valid permutations exceed the search budget of {budget}; \
         add hierarchy constraints or an allow-list to shrink the search"
    )]
    TooManyPermutations { count: u128, budget: u128 },
    #[error("order {0:?} is not a valid permutation for this chart")]
    InvalidOrder(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub alpha: f64,
    pub k: usize,
    pub threshold: f64,
    pub epsilon_line: f64,
    pub budget: u128,
    /// Caller-supplied orders; when present only these (and only those that
    /// respect the hierarchy) are searched.
    pub allow_list: Option<Vec<Vec<String>>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            k: 5,
            threshold: diagnose::DEFAULT_THRESHOLD,
            epsilon_line: diagnose::DEFAULT_EPSILON_LINE,
            budget: DEFAULT_PERMUTATION_BUDGET,
            allow_list: None,
        }
    }
}

impl SearchConfig {
    pub fn diagnose_config(&self) -> DiagnoseConfig {
        DiagnoseConfig {
            threshold: self.threshold,
            epsilon_line: self.epsilon_line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationScore {
    pub order: Vec<String>,
    pub s: f64,
    pub s_d: f64,
    pub s_v: usize,
    pub desired_met: usize,
    pub report: DiagnosisReport,
}

pub fn score(alpha: f64, s_d: f64, s_v: usize) -> f64 {
    alpha * s_d - (1.0 - alpha) * s_v as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCell {
    pub violations: usize,
    pub desired_met: usize,
    pub count: usize,
    pub exemplars: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeMatrix {
    pub total: usize,
    pub cells: Vec<LandscapeCell>,
}

impl LandscapeMatrix {
    pub fn cell(&self, violations: usize, desired_met: usize) -> Option<&LandscapeCell> {
        self.cells
            .iter()
            .find(|c| c.violations == violations && c.desired_met == desired_met)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub results: Vec<PermutationScore>,
    pub examined: usize,
    pub landscape: Option<LandscapeMatrix>,
}

/// Lexicographic enumeration (over slot indices of the current order) of every
/// order that keeps each hierarchy category contiguous.
pub struct ValidPermutations {
    n: usize,
    category: Option<Vec<usize>>,
    category_size: Vec<usize>,
    placed_in: Vec<usize>,
    prefix: Vec<usize>,
    used: Vec<bool>,
    /// Next candidate index to try at each depth.
    cursor: Vec<usize>,
    done: bool,
}

impl ValidPermutations {
    fn new(chart: &Chart) -> Self {
        let n = chart.len();
        let category = chart.category_of_points();
        let mut category_size = Vec::new();
        if let Some(cats) = &category {
            category_size = vec![0; chart.hierarchy.as_ref().map_or(0, |h| h.len())];
            for &c in cats {
                category_size[c] += 1;
            }
        }
        Self {
            n,
            placed_in: vec![0; category_size.len()],
            category,
            category_size,
            prefix: Vec::with_capacity(n),
            used: vec![false; n],
            cursor: vec![0],
            done: false,
        }
    }

    fn can_place(&self, p: usize) -> bool {
        let Some(cat) = &self.category else {
            return true;
        };
        let Some(&last) = self.prefix.last() else {
            return true;
        };
        let (c, prev) = (cat[p], cat[last]);
        c == prev || (self.placed_in[prev] == self.category_size[prev] && self.placed_in[c] == 0)
    }

    fn push(&mut self, p: usize) {
        self.used[p] = true;
        if let Some(cat) = &self.category {
            self.placed_in[cat[p]] += 1;
        }
        self.prefix.push(p);
        self.cursor.push(0);
    }

    fn pop(&mut self) {
        self.cursor.pop();
        if let Some(p) = self.prefix.pop() {
            self.used[p] = false;
            if let Some(cat) = &self.category {
                self.placed_in[cat[p]] -= 1;
            }
        }
    }
}

impl Iterator for ValidPermutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        loop {
            if self.prefix.len() == self.n {
                let out = self.prefix.clone();
                self.pop();
                return Some(out);
            }
            let depth = self.prefix.len();
            let start = self.cursor[depth];
            let next = (start..self.n).find(|&p| !self.used[p] && self.can_place(p));
            match next {
                Some(p) => {
                    self.cursor[depth] = p + 1;
                    self.push(p);
                }
                None if depth == 0 => {
                    self.done = true;
                    return None;
                }
                None => self.pop(),
            }
        }
    }
}

pub fn valid_permutations(chart: &Chart) -> Result<ValidPermutations, ChartError> {
    chart.validate()?;
    Ok(ValidPermutations::new(chart))
}

/// Valid permutations as label orders.
pub fn valid_orders(chart: &Chart) -> Result<impl Iterator<Item = Vec<String>> + '_, ChartError> {
    Ok(valid_permutations(chart)?
        .map(|p| p.iter().map(|&i| chart.points[i].label.clone()).collect()))
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128)
        .try_fold(1u128, |acc, x| acc.checked_mul(x))
        .unwrap_or(u128::MAX)
}

/// Number of hierarchy-valid orders: k! * prod(m_i!) with a hierarchy, n! without.
pub fn count_valid_permutations(chart: &Chart) -> u128 {
    match &chart.hierarchy {
        None => factorial(chart.len()),
        Some(cats) => cats
            .iter()
            .map(|c| factorial(c.members.len()))
            .fold(factorial(cats.len()), |acc, x| acc.saturating_mul(x)),
    }
}

/// Whether `order` (slot indices into the chart's current order) keeps each
/// category contiguous.
pub fn is_hierarchy_valid(chart: &Chart, order: &[usize]) -> bool {
    let Some(cat) = chart.category_of_points() else {
        return true;
    };
    let mut finished = HashSet::new();
    for w in order.windows(2) {
        let (a, b) = (cat[w[0]], cat[w[1]]);
        if a != b {
            finished.insert(a);
            if finished.contains(&b) {
                return false;
            }
        }
    }
    true
}

fn order_indices<S: AsRef<str>>(chart: &Chart, order: &[S]) -> Option<Vec<usize>> {
    if order.len() != chart.len() {
        return None;
    }
    let mut seen = vec![false; chart.len()];
    order
        .iter()
        .map(|l| {
            let i = chart.index_of(l.as_ref())?;
            (!std::mem::replace(&mut seen[i], true)).then_some(i)
        })
        .collect()
}

fn check_alpha(alpha: f64) -> Result<(), RedesignError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(RedesignError::InvalidAlpha(alpha));
    }
    Ok(())
}

struct Scored {
    order: Vec<usize>,
    labels: Vec<String>,
    s: f64,
    s_d: f64,
    s_v: usize,
    desired_met: usize,
}

/// Better-first ordering: score, then fewer violations, more desired groups,
/// and finally the lexicographically smaller label order.
fn rank(a: &Scored, b: &Scored) -> Ordering {
    b.s.total_cmp(&a.s)
        .then(a.s_v.cmp(&b.s_v))
        .then(b.desired_met.cmp(&a.desired_met))
        .then_with(|| a.labels.cmp(&b.labels))
}

struct Evaluator<'a> {
    chart: &'a Chart,
    desired: Vec<Group>,
    model: &'a GroupingModel,
    config: DiagnoseConfig,
    candidates: Vec<u64>,
    alpha: f64,
}

impl Evaluator<'_> {
    fn hits(&self, permuted: &Chart) -> Result<Vec<Hit>, RedesignError> {
        let desired = diagnose::desired_masks(permuted, &self.desired)?;
        Ok(diagnose::detect(
            permuted,
            &self.candidates,
            &desired,
            self.model,
            &self.config,
        )?)
    }

    fn score(&self, order: &[usize]) -> Result<(Scored, Chart, Vec<Hit>), RedesignError> {
        let permuted = chart::permute_by_index(self.chart, order);
        let hits = self.hits(&permuted)?;
        let s_d = diagnose::probability_sum(hits.iter().filter(|h| h.desired).map(|h| h.prob));
        let desired_met = hits.iter().filter(|h| h.desired).count();
        let s_v = hits.len() - desired_met;
        let scored = Scored {
            order: order.to_vec(),
            labels: permuted.labels(),
            s: score(self.alpha, s_d, s_v),
            s_d,
            s_v,
            desired_met,
        };
        Ok((scored, permuted, hits))
    }

    fn full(&self, order: &[usize]) -> Result<PermutationScore, RedesignError> {
        let (scored, permuted, hits) = self.score(order)?;
        let report = diagnose::build_report(
            &permuted,
            self.desired.clone(),
            &hits,
            self.model,
            &self.config,
        );
        Ok(PermutationScore {
            order: scored.labels,
            s: scored.s,
            s_d: scored.s_d,
            s_v: scored.s_v,
            desired_met: scored.desired_met,
            report,
        })
    }
}

fn evaluator<'a>(
    chart: &'a Chart,
    desired: &[Group],
    model: &'a GroupingModel,
    alpha: f64,
    config: DiagnoseConfig,
) -> Result<Evaluator<'a>, RedesignError> {
    chart.validate()?;
    check_alpha(alpha)?;
    diagnose::check_config(&config)?;
    let desired = diagnose::dedup_groups(desired);
    // Validates the desired groups once against the chart's labels.
    diagnose::desired_masks(chart, &desired)?;
    let n = chart.len();
    if n < 3 {
        return Err(DiagnoseError::TooFewPoints(n).into());
    }
    if n > diagnose::MAX_DIAGNOSE_POINTS {
        return Err(DiagnoseError::TooManyPoints(n).into());
    }
    Ok(Evaluator {
        chart,
        desired,
        model,
        config,
        candidates: diagnose::candidate_masks(n),
        alpha,
    })
}

pub fn score_permutation<S: AsRef<str>>(
    chart: &Chart,
    order: &[S],
    desired: &[Group],
    model: &GroupingModel,
    alpha: f64,
    config: &DiagnoseConfig,
) -> Result<PermutationScore, RedesignError> {
    let eval = evaluator(chart, desired, model, alpha, *config)?;
    let indices = order_indices(chart, order).ok_or_else(|| {
        RedesignError::InvalidOrder(order.iter().map(|s| s.as_ref().to_string()).collect())
    })?;
    eval.full(&indices)
}

/// Orders to search and their count, after the budget check.
fn search_space<'a>(
    chart: &'a Chart,
    config: &SearchConfig,
) -> Result<(Box<dyn Iterator<Item = Vec<usize>> + 'a>, usize), RedesignError> {
    match &config.allow_list {
        Some(allowed) => {
            let count = allowed.len() as u128;
            if count > config.budget {
                return Err(RedesignError::TooManyPermutations {
                    count,
                    budget: config.budget,
                });
            }
            let mut orders = Vec::with_capacity(allowed.len());
            for order in allowed {
                let idx = order_indices(chart, order)
                    .ok_or_else(|| RedesignError::InvalidOrder(order.clone()))?;
                if is_hierarchy_valid(chart, &idx) && !orders.contains(&idx) {
                    orders.push(idx);
                }
            }
            orders.sort();
            let total = orders.len();
            Ok((Box::new(orders.into_iter()), total))
        }
        None => {
            let count = count_valid_permutations(chart);
            if count > config.budget {
                return Err(RedesignError::TooManyPermutations {
                    count,
                    budget: config.budget,
                });
            }
            Ok((Box::new(ValidPermutations::new(chart)), count as usize))
        }
    }
}

/// Scores every valid order, returning the top `k` and optionally the
/// landscape. `progress` receives `(examined, total)` as the search advances.
pub fn search(
    chart: &Chart,
    desired: &[Group],
    model: &GroupingModel,
    config: &SearchConfig,
    with_landscape: bool,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<SearchOutcome, RedesignError> {
    if config.k == 0 {
        return Err(RedesignError::InvalidK);
    }
    let eval = evaluator(
        chart,
        desired,
        model,
        config.alpha,
        config.diagnose_config(),
    )?;
    let (orders, total) = search_space(chart, config)?;
    let mut top: Vec<Scored> = Vec::with_capacity(config.k + 1);
    let mut cells: BTreeMap<(usize, usize), LandscapeCell> = BTreeMap::new();
    for (examined, order) in orders.enumerate() {
        let (scored, permuted, _) = eval.score(&order)?;
        if with_landscape {
            let cell = cells
                .entry((scored.s_v, scored.desired_met))
                .or_insert_with(|| LandscapeCell {
                    violations: scored.s_v,
                    desired_met: scored.desired_met,
                    count: 0,
                    exemplars: Vec::new(),
                });
            cell.count += 1;
            if cell.exemplars.len() < LANDSCAPE_EXEMPLARS {
                cell.exemplars.push(permuted.labels());
            }
        }
        let pos = top.partition_point(|t| rank(t, &scored) != Ordering::Greater);
        if pos < config.k {
            top.insert(pos, scored);
            top.truncate(config.k);
        }
        if let Some(report) = progress {
            if (examined + 1) % 64 == 0 || examined + 1 == total {
                report(examined + 1, total);
            }
        }
    }
    let results = top
        .iter()
        .map(|t| eval.full(&t.order))
        .collect::<Result<Vec<_>, _>>()?;
    let landscape = with_landscape.then(|| LandscapeMatrix {
        total,
        cells: cells.into_values().collect(),
    });
    Ok(SearchOutcome {
        results,
        examined: total,
        landscape,
    })
}

pub fn redesign(
    chart: &Chart,
    desired: &[Group],
    model: &GroupingModel,
    config: &SearchConfig,
) -> Result<Vec<PermutationScore>, RedesignError> {
    Ok(search(chart, desired, model, config, false, None)?.results)
}

pub fn landscape(
    chart: &Chart,
    desired: &[Group],
    model: &GroupingModel,
    config: &SearchConfig,
) -> Result<LandscapeMatrix, RedesignError> {
    let config = SearchConfig {
        k: 1,
        ..config.clone()
    };
    Ok(search(chart, desired, model, &config, true, None)?
        .landscape
        .expect("landscape requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{generate_random_chart, Category};
    use crate::features::Feature;
    use crate::model::{DecisionTree, ModelKind, ModelMetadata};

    fn tree(t: DecisionTree) -> GroupingModel {
        GroupingModel::new(ModelKind::Tree(t), ModelMetadata::default()).unwrap()
    }

    fn with_hierarchy(chart: &mut Chart, cats: &[&[&str]]) {
        chart.hierarchy = Some(
            cats.iter()
                .enumerate()
                .map(|(i, m)| Category {
                    name: format!("c{i}"),
                    members: m.iter().map(|s| s.to_string()).collect(),
                })
                .collect(),
        );
    }

    #[test]
    fn unconstrained_counts() {
        let chart = generate_random_chart(6, 1).unwrap();
        let all: Vec<_> = valid_permutations(&chart).unwrap().collect();
        assert_eq!(all.len(), 720);
        assert_eq!(count_valid_permutations(&chart), 720);
        assert_eq!(all[0], vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(all[719], vec![5, 4, 3, 2, 1, 0]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hierarchy_count_matches_filter_oracle() {
        let mut chart = generate_random_chart(6, 1).unwrap();
        with_hierarchy(&mut chart, &[&["A", "B"], &["C", "D"], &["E", "F"]]);
        let valid: Vec<_> = valid_permutations(&chart).unwrap().collect();
        assert_eq!(valid.len(), 48);
        assert_eq!(count_valid_permutations(&chart), 48);
        let filtered: Vec<_> = ValidPermutations::new(&Chart {
            hierarchy: None,
            ..chart.clone()
        })
        .filter(|o| is_hierarchy_valid(&chart, o))
        .collect();
        assert_eq!(valid, filtered);

        with_hierarchy(&mut chart, &[&["A", "B", "C", "D", "E", "F"]]);
        assert_eq!(valid_permutations(&chart).unwrap().count(), 720);
    }

    #[test]
    fn alpha_extremes() {
        assert_eq!(score(0.0, 2.5, 7), -7.0);
        assert!((score(1.0, 0.95 + 0.92 + 0.90, 3) - 2.77).abs() < 1e-12);
    }

    #[test]
    fn no_desired_means_zero_s_d() {
        let chart = generate_random_chart(6, 2).unwrap();
        let model = tree(DecisionTree::stump(Feature::YSep, 10.0, 0.2, 0.95));
        let config = SearchConfig {
            alpha: 0.3,
            k: 3,
            ..Default::default()
        };
        let out = search(&chart, &[], &model, &config, true, None).unwrap();
        assert_eq!(out.examined, 720);
        assert!(out
            .results
            .iter()
            .all(|r| r.s_d == 0.0 && r.desired_met == 0));
        let min_v = out
            .landscape
            .as_ref()
            .unwrap()
            .cells
            .iter()
            .map(|c| c.violations)
            .min()
            .unwrap();
        assert!((out.results[0].s - -(0.7 * min_v as f64)).abs() < 1e-12);
        let land = out.landscape.unwrap();
        assert!(land.cells.iter().all(|c| c.desired_met == 0));
        assert_eq!(land.cells.iter().map(|c| c.count).sum::<usize>(), 720);
    }

    #[test]
    fn budget_guard() {
        let chart = generate_random_chart(6, 2).unwrap();
        let model = tree(DecisionTree::leaf(0.5));
        let config = SearchConfig {
            budget: 100,
            ..Default::default()
        };
        assert!(matches!(
            redesign(&chart, &[], &model, &config),
            Err(RedesignError::TooManyPermutations {
                count: 720,
                budget: 100
            })
        ));
    }

    #[test]
    fn allow_list_restricts_search() {
        let chart = generate_random_chart(4, 2).unwrap();
        let model = tree(DecisionTree::stump(Feature::YSep, 10.0, 0.2, 0.95));
        let allowed = vec![
            vec!["D".to_string(), "C".into(), "B".into(), "A".into()],
            vec!["A".to_string(), "B".into(), "C".into(), "D".into()],
        ];
        let config = SearchConfig {
            k: 5,
            allow_list: Some(allowed),
            ..Default::default()
        };
        let out = search(&chart, &[], &model, &config, true, None).unwrap();
        assert_eq!(out.examined, 2);
        assert_eq!(out.results.len(), 2);
        let bad = SearchConfig {
            allow_list: Some(vec![vec!["A".into(), "A".into(), "B".into(), "C".into()]]),
            ..Default::default()
        };
        assert!(matches!(
            redesign(&chart, &[], &model, &bad),
            Err(RedesignError::InvalidOrder(_))
        ));
    }

    #[test]
    fn results_sorted_and_truncated() {
        let chart = generate_random_chart(5, 4).unwrap();
        let model = tree(DecisionTree::stump(Feature::YSep, 12.0, 0.1, 0.93));
        let desired = vec![Group::new(["A", "B"])];
        let config = SearchConfig {
            alpha: 0.6,
            k: 7,
            ..Default::default()
        };
        let results = redesign(&chart, &desired, &model, &config).unwrap();
        assert_eq!(results.len(), 7);
        for w in results.windows(2) {
            assert!(w[0].s >= w[1].s);
        }
        for r in &results {
            assert_eq!(r.s, score(0.6, r.s_d, r.s_v));
            assert_eq!(r.s_v, r.report.violations());
            assert_eq!(r.desired_met, r.report.desired_met());
        }
    }

    #[test]
    fn progress_reaches_total() {
        use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
        let chart = generate_random_chart(5, 4).unwrap();
        let model = tree(DecisionTree::leaf(0.5));
        let last = AtomicUsize::new(0);
        let report = |done: usize, total: usize| {
            assert_eq!(total, 120);
            last.store(done, AtomicOrdering::SeqCst);
        };
        search(
            &chart,
            &[],
            &model,
            &SearchConfig::default(),
            false,
            Some(&report),
        )
        .unwrap();
        assert_eq!(last.load(AtomicOrdering::SeqCst), 120);
    }
}
