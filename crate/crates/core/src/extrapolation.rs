//! Extrapolation of in-depth casualty reductions to a target region.
//!
//! A greedy binary CART (Gini impurity) is grown on in-depth person data over
//! age, gender, weather, surface, light, site and urban; the identical split
//! rules are applied to the target-region persons. Per terminal node and
//! injury level the extrapolation factor is the target frequency divided by
//! the in-depth frequency, and reductions are scaled node by node.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::domain::{InjurySeverity, PersonRecord};

#[derive(Debug, Error)]
pub enum ExtrapolationError {
    #[error("insufficient data: {n} records, need at least {needed}")]
    InsufficientData { n: usize, needed: usize },
    #[error("single injury class in the training data")]
    SingleClass,
    #[error("record {row} is missing split variable {variable}")]
    MissingVariable { variable: String, row: usize },
    #[error("zero in-depth frequency for level {level} in node {node}")]
    ZeroDenominator { level: InjurySeverity, node: usize },
}

/// Tree growth limits. The defaults mirror the shallow extrapolation trees
/// of the reference analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 3,
            min_leaf: 30,
        }
    }
}

/// Variables available to the tree, in candidate-evaluation order
/// (lexicographic by name, which makes ties deterministic).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitVariable {
    Age,
    Gender,
    Light,
    Site,
    Surface,
    Urban,
    Weather,
}

impl SplitVariable {
    const ALL: [SplitVariable; 7] = [
        SplitVariable::Age,
        SplitVariable::Gender,
        SplitVariable::Light,
        SplitVariable::Site,
        SplitVariable::Surface,
        SplitVariable::Urban,
        SplitVariable::Weather,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SplitVariable::Age => "age",
            SplitVariable::Gender => "gender",
            SplitVariable::Light => "light",
            SplitVariable::Site => "site",
            SplitVariable::Surface => "surface",
            SplitVariable::Urban => "urban",
            SplitVariable::Weather => "weather",
        }
    }
}

enum VarValue<'a> {
    Num(f64),
    Cat(&'a str),
}

fn var_value(person: &PersonRecord, variable: SplitVariable) -> VarValue<'_> {
    match variable {
        SplitVariable::Age => VarValue::Num(person.age),
        SplitVariable::Gender => VarValue::Cat(&person.gender),
        SplitVariable::Light => VarValue::Cat(&person.light),
        SplitVariable::Site => VarValue::Cat(&person.site),
        SplitVariable::Surface => VarValue::Cat(&person.surface),
        SplitVariable::Urban => VarValue::Cat(if person.urban { "true" } else { "false" }),
        SplitVariable::Weather => VarValue::Cat(&person.weather),
    }
}

/// Binary split rule; records matching go left.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// variable ≤ threshold
    NumericLe(f64),
    /// variable ∈ category set
    CategoryIn(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub variable: SplitVariable,
    pub rule: SplitRule,
}

impl Split {
    fn goes_left(&self, person: &PersonRecord) -> bool {
        match (&self.rule, var_value(person, self.variable)) {
            (SplitRule::NumericLe(t), VarValue::Num(v)) => v <= *t,
            (SplitRule::CategoryIn(set), VarValue::Cat(v)) => set.contains(v),
            // Unseen combinations cannot arise: the rule kind matches the
            // variable kind by construction.
            _ => false,
        }
    }

    fn describe(&self, negate: bool) -> String {
        match &self.rule {
            SplitRule::NumericLe(t) => {
                if negate {
                    format!("{}>{}", self.variable.name(), t)
                } else {
                    format!("{}<={}", self.variable.name(), t)
                }
            }
            SplitRule::CategoryIn(set) => {
                let values: Vec<&str> = set.iter().map(String::as_str).collect();
                format!(
                    "{} {} {{{}}}",
                    self.variable.name(),
                    if negate { "not in" } else { "in" },
                    values.join(",")
                )
            }
        }
    }
}

/// Class counts ordered (fatal, serious, slight).
pub type ClassCounts = [u64; 3];

fn class_index(injury: InjurySeverity) -> usize {
    match injury {
        InjurySeverity::Fatal => 0,
        InjurySeverity::Serious => 1,
        InjurySeverity::Slight => 2,
    }
}

fn count_classes(persons: &[&PersonRecord]) -> ClassCounts {
    let mut counts = [0u64; 3];
    for p in persons {
        counts[class_index(p.injury)] += 1;
    }
    counts
}

fn gini(counts: &ClassCounts) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Majority class; ties break towards the more severe injury.
fn predict(counts: &ClassCounts) -> InjurySeverity {
    let order = [
        InjurySeverity::Fatal,
        InjurySeverity::Serious,
        InjurySeverity::Slight,
    ];
    let mut best = InjurySeverity::Fatal;
    let mut best_count = 0u64;
    for class in order {
        let c = counts[class_index(class)];
        if c > best_count {
            best = class;
            best_count = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub node_id: usize,
    pub split: Option<Split>,
    pub children: Option<(Box<TreeNode>, Box<TreeNode>)>,
    pub class_counts: ClassCounts,
    pub predicted_class: InjurySeverity,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    fn leaf_for<'a>(&'a self, person: &PersonRecord) -> &'a TreeNode {
        match (&self.split, &self.children) {
            (Some(split), Some((left, right))) => {
                if split.goes_left(person) {
                    left.leaf_for(person)
                } else {
                    right.leaf_for(person)
                }
            }
            _ => self,
        }
    }

    /// Leaf node ids in id order.
    pub fn leaf_ids(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if n.is_leaf() {
                out.push(n.node_id);
            }
        });
        out.sort_unstable();
        out
    }

    fn visit(&self, f: &mut impl FnMut(&TreeNode)) {
        f(self);
        if let Some((l, r)) = &self.children {
            l.visit(f);
            r.visit(f);
        }
    }

    /// Conjunctive path rule per leaf, e.g. `age>55 & urban in {false}`.
    pub fn leaf_rules(&self) -> BTreeMap<usize, String> {
        let mut out = BTreeMap::new();
        fn walk(node: &TreeNode, path: &str, out: &mut BTreeMap<usize, String>) {
            match (&node.split, &node.children) {
                (Some(split), Some((l, r))) => {
                    let join = |cond: String| {
                        if path.is_empty() {
                            cond
                        } else {
                            format!("{path} & {cond}")
                        }
                    };
                    walk(l, &join(split.describe(false)), out);
                    walk(r, &join(split.describe(true)), out);
                }
                _ => {
                    out.insert(
                        node.node_id,
                        if path.is_empty() {
                            "all".to_string()
                        } else {
                            path.to_string()
                        },
                    );
                }
            }
        }
        walk(self, "", &mut out);
        out
    }
}

struct Candidate {
    split: Split,
    gain: f64,
}

fn best_split(persons: &[&PersonRecord], params: &TreeParams) -> Option<Split> {
    let parent_counts = count_classes(persons);
    let parent_gini = gini(&parent_counts);
    if parent_gini == 0.0 {
        return None;
    }
    let n = persons.len() as f64;
    let mut best: Option<Candidate> = None;

    let mut consider = |split: Split| {
        let (mut left, mut right) = ([0u64; 3], [0u64; 3]);
        for p in persons {
            let idx = class_index(p.injury);
            if split.goes_left(p) {
                left[idx] += 1;
            } else {
                right[idx] += 1;
            }
        }
        let nl: u64 = left.iter().sum();
        let nr: u64 = right.iter().sum();
        if (nl as usize) < params.min_leaf || (nr as usize) < params.min_leaf {
            return;
        }
        let weighted = (nl as f64 / n) * gini(&left) + (nr as f64 / n) * gini(&right);
        let gain = parent_gini - weighted;
        if gain <= 1e-12 {
            return;
        }
        // Strict improvement only: the first candidate in evaluation order
        // wins ties, keeping the tree deterministic.
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(Candidate { split, gain });
        }
    };

    for variable in SplitVariable::ALL {
        match var_value(persons[0], variable) {
            VarValue::Num(_) => {
                let mut values: Vec<f64> = persons
                    .iter()
                    .map(|p| match var_value(p, variable) {
                        VarValue::Num(v) => v,
                        VarValue::Cat(_) => unreachable!(),
                    })
                    .collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                for pair in values.windows(2) {
                    let threshold = 0.5 * (pair[0] + pair[1]);
                    consider(Split {
                        variable,
                        rule: SplitRule::NumericLe(threshold),
                    });
                }
            }
            VarValue::Cat(_) => {
                let levels: BTreeSet<String> = persons
                    .iter()
                    .map(|p| match var_value(p, variable) {
                        VarValue::Cat(s) => s.to_string(),
                        VarValue::Num(_) => unreachable!(),
                    })
                    .collect();
                let levels: Vec<String> = levels.into_iter().collect();
                let l = levels.len();
                if !(2..=8).contains(&l) {
                    continue;
                }
                // Exhaustive binary partitions, the first level pinned left.
                let combos = 1u32 << (l - 1);
                for mask in 0..combos - 1 {
                    let mut left: BTreeSet<String> = BTreeSet::new();
                    left.insert(levels[0].clone());
                    for (i, level) in levels.iter().enumerate().skip(1) {
                        if mask & (1 << (i - 1)) != 0 {
                            left.insert(level.clone());
                        }
                    }
                    consider(Split {
                        variable,
                        rule: SplitRule::CategoryIn(left),
                    });
                }
            }
        }
    }
    best.map(|c| c.split)
}

fn grow(persons: &[&PersonRecord], depth: usize, params: &TreeParams) -> TreeNode {
    let class_counts = count_classes(persons);
    let predicted_class = predict(&class_counts);
    let can_split = depth < params.max_depth && persons.len() >= 2 * params.min_leaf;
    let split = if can_split {
        best_split(persons, params)
    } else {
        None
    };
    match split {
        Some(split) => {
            let (left, right): (Vec<&PersonRecord>, Vec<&PersonRecord>) =
                persons.iter().partition(|p| split.goes_left(p));
            let left_node = grow(&left, depth + 1, params);
            let right_node = grow(&right, depth + 1, params);
            TreeNode {
                node_id: 0,
                split: Some(split),
                children: Some((Box::new(left_node), Box::new(right_node))),
                class_counts,
                predicted_class,
            }
        }
        None => TreeNode {
            node_id: 0,
            split: None,
            children: None,
            class_counts,
            predicted_class,
        },
    }
}

/// Level-order node numbering (root = 1, then depth by depth left to
/// right), matching the usual rendering of classification trees.
fn renumber(root: &mut TreeNode) {
    fn depth_counts(node: &TreeNode, depth: usize, counts: &mut Vec<usize>) {
        if counts.len() <= depth {
            counts.push(0);
        }
        counts[depth] += 1;
        if let Some((l, r)) = &node.children {
            depth_counts(l, depth + 1, counts);
            depth_counts(r, depth + 1, counts);
        }
    }
    fn assign(node: &mut TreeNode, depth: usize, next: &mut [usize]) {
        node.node_id = next[depth];
        next[depth] += 1;
        if let Some((l, r)) = &mut node.children {
            assign(l, depth + 1, next);
            assign(r, depth + 1, next);
        }
    }
    let mut counts = Vec::new();
    depth_counts(root, 0, &mut counts);
    let mut next = Vec::with_capacity(counts.len());
    let mut acc = 1;
    for c in counts {
        next.push(acc);
        acc += c;
    }
    assign(root, 0, &mut next);
}

/// Grow a CART on in-depth persons.
pub fn build_tree(
    persons: &[PersonRecord],
    params: &TreeParams,
) -> Result<TreeNode, ExtrapolationError> {
    if persons.len() < 2 * params.min_leaf {
        return Err(ExtrapolationError::InsufficientData {
            n: persons.len(),
            needed: 2 * params.min_leaf,
        });
    }
    let classes: BTreeSet<InjurySeverity> = persons.iter().map(|p| p.injury).collect();
    if classes.len() < 2 {
        return Err(ExtrapolationError::SingleClass);
    }
    let refs: Vec<&PersonRecord> = persons.iter().collect();
    let mut root = grow(&refs, 0, params);
    renumber(&mut root);
    Ok(root)
}

/// Route target persons through the tree; returns class counts per leaf id.
/// Split variables are always present on typed records (the CSV parser
/// enforces the schema), and unseen categorical values route right.
pub fn apply_tree(tree: &TreeNode, persons: &[PersonRecord]) -> BTreeMap<usize, ClassCounts> {
    let mut counts: BTreeMap<usize, ClassCounts> = BTreeMap::new();
    for id in tree.leaf_ids() {
        counts.insert(id, [0; 3]);
    }
    for p in persons {
        let leaf = tree.leaf_for(p);
        counts.get_mut(&leaf.node_id).expect("leaf id present")[class_index(p.injury)] += 1;
    }
    counts
}

/// The leaf where one person's covariates land.
pub fn route(tree: &TreeNode, person: &PersonRecord) -> usize {
    tree.leaf_for(person).node_id
}

/// One extrapolation factor, kept as an exact integer ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub target: u64,
    pub indepth: u64,
}

impl Factor {
    pub fn value(&self) -> f64 {
        self.target as f64 / self.indepth as f64
    }
}

/// Factors per (injury level, terminal node). Pairs with zero frequency in
/// both datasets carry no factor; a zero in-depth frequency with target mass
/// is an error, not infinity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtrapolationFactors {
    factors: BTreeMap<(usize, InjurySeverity), Factor>,
}

impl ExtrapolationFactors {
    pub fn get(&self, node: usize, level: InjurySeverity) -> Option<Factor> {
        self.factors.get(&(node, level)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, InjurySeverity), Factor)> + '_ {
        self.factors.iter().map(|(k, v)| (*k, *v))
    }
}

/// Elementwise target/in-depth frequency ratio per leaf and level.
pub fn compute_factors(
    indepth: &BTreeMap<usize, ClassCounts>,
    target: &BTreeMap<usize, ClassCounts>,
) -> Result<ExtrapolationFactors, ExtrapolationError> {
    let mut factors = BTreeMap::new();
    let levels = [
        InjurySeverity::Fatal,
        InjurySeverity::Serious,
        InjurySeverity::Slight,
    ];
    let nodes: BTreeSet<usize> = indepth.keys().chain(target.keys()).copied().collect();
    for node in nodes {
        let zeros = [0u64; 3];
        let i_counts = indepth.get(&node).unwrap_or(&zeros);
        let t_counts = target.get(&node).unwrap_or(&zeros);
        for level in levels {
            let i = i_counts[class_index(level)];
            let t = t_counts[class_index(level)];
            match (i, t) {
                (0, 0) => {}
                (0, _) => return Err(ExtrapolationError::ZeroDenominator { level, node }),
                _ => {
                    factors.insert(
                        (node, level),
                        Factor {
                            target: t,
                            indepth: i,
                        },
                    );
                }
            }
        }
    }
    Ok(ExtrapolationFactors { factors })
}

/// Target-region reduction: Σ_n reduction_n · factor_{level,n}. Every node
/// with nonzero reduction must carry a factor for the level.
pub fn extrapolate_reduction(
    per_node_reductions: &BTreeMap<usize, f64>,
    factors: &ExtrapolationFactors,
    level: InjurySeverity,
) -> Result<f64, ExtrapolationError> {
    let mut total = 0.0;
    for (&node, &reduction) in per_node_reductions {
        if reduction == 0.0 {
            continue;
        }
        let factor = factors
            .get(node, level)
            .ok_or(ExtrapolationError::ZeroDenominator { level, node })?;
        total += reduction * factor.value();
    }
    Ok(total)
}

/// Indented per-node dump: id, rule, class counts, predicted class.
pub fn render_tree(tree: &TreeNode) -> String {
    let mut out = String::new();
    fn walk(node: &TreeNode, rule: &str, depth: usize, out: &mut String) {
        let [f, s, sl] = node.class_counts;
        let _ = writeln!(
            out,
            "{}node {}: {} | fatal/serious/slight = {}/{}/{} | class {}",
            "  ".repeat(depth),
            node.node_id,
            rule,
            f,
            s,
            sl,
            node.predicted_class,
        );
        if let (Some(split), Some((l, r))) = (&node.split, &node.children) {
            walk(l, &split.describe(false), depth + 1, out);
            walk(r, &split.describe(true), depth + 1, out);
        }
    }
    walk(tree, "root", 0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::VruType;

    fn person(age: f64, urban: bool, injury: InjurySeverity) -> PersonRecord {
        PersonRecord {
            vru_type: VruType::Cyclist,
            injury,
            age,
            gender: "M".into(),
            weather: "Clear".into(),
            surface: "Dry".into(),
            light: "Daylight".into(),
            site: "Straight".into(),
            urban,
            collision_speed: 30.0,
        }
    }

    /// Age ≤ 55 ↔ Slight, age > 55 ↔ Fatal; perfectly separable.
    fn separable(n_half: usize) -> Vec<PersonRecord> {
        let mut out = Vec::new();
        for i in 0..n_half {
            out.push(person(20.0 + (i % 30) as f64, true, InjurySeverity::Slight));
            out.push(person(60.0 + (i % 30) as f64, true, InjurySeverity::Fatal));
        }
        out
    }

    #[test]
    fn perfect_split_recovered_with_pure_children() {
        let persons = separable(40);
        let tree = build_tree(&persons, &TreeParams::default()).unwrap();
        let split = tree.split.as_ref().expect("root must split");
        assert_eq!(split.variable, SplitVariable::Age);
        match &split.rule {
            SplitRule::NumericLe(t) => assert!(*t > 49.0 && *t < 60.0, "threshold {t}"),
            other => panic!("unexpected rule {other:?}"),
        }
        let (l, r) = tree.children.as_ref().unwrap();
        assert_eq!(gini(&l.class_counts), 0.0);
        assert_eq!(gini(&r.class_counts), 0.0);
        // Children counts partition the parent.
        for i in 0..3 {
            assert_eq!(l.class_counts[i] + r.class_counts[i], tree.class_counts[i]);
        }
    }

    #[test]
    fn min_leaf_equal_to_n_blocks_all_splits() {
        let persons = separable(40);
        let params = TreeParams {
            max_depth: 3,
            min_leaf: persons.len(),
        };
        // 2·min_leaf > n: insufficient data for even one split.
        assert!(matches!(
            build_tree(&persons, &params),
            Err(ExtrapolationError::InsufficientData { .. })
        ));
        let params = TreeParams {
            max_depth: 0,
            min_leaf: 1,
        };
        let tree = build_tree(&persons, &params).unwrap();
        assert!(tree.is_leaf());
    }

    #[test]
    fn planted_two_level_rule_recovered() {
        // Level 1: age at 55; level 2 (older branch): urban separates
        // Fatal from Serious.
        let mut persons = Vec::new();
        for i in 0..120 {
            persons.push(person(
                20.0 + (i % 35) as f64,
                i % 2 == 0,
                InjurySeverity::Slight,
            ));
            persons.push(person(
                60.0 + (i % 25) as f64,
                i % 2 == 0,
                if i % 2 == 0 {
                    InjurySeverity::Serious
                } else {
                    InjurySeverity::Fatal
                },
            ));
        }
        let tree = build_tree(&persons, &TreeParams::default()).unwrap();
        let root_split = tree.split.as_ref().unwrap();
        assert_eq!(root_split.variable, SplitVariable::Age);
        let (_, older) = tree.children.as_ref().unwrap();
        let older_split = older.split.as_ref().expect("older branch must split");
        assert_eq!(older_split.variable, SplitVariable::Urban);
        let rules = tree.leaf_rules();
        assert!(rules
            .values()
            .any(|r| r.contains("age>") && r.contains("urban")));
    }

    #[test]
    fn apply_tree_is_idempotent_on_training_data() {
        let persons = separable(50);
        let tree = build_tree(&persons, &TreeParams::default()).unwrap();
        let routed = apply_tree(&tree, &persons);
        let mut training: BTreeMap<usize, ClassCounts> = BTreeMap::new();
        tree.visit(&mut |n| {
            if n.is_leaf() {
                training.insert(n.node_id, n.class_counts);
            }
        });
        assert_eq!(routed, training);
        // Partition: per-level sums across leaves equal the record count.
        let total: u64 = routed.values().map(|c| c.iter().sum::<u64>()).sum();
        assert_eq!(total as usize, persons.len());
    }

    #[test]
    fn single_record_routes_to_one_leaf() {
        let persons = separable(50);
        let tree = build_tree(&persons, &TreeParams::default()).unwrap();
        let one = vec![person(70.0, true, InjurySeverity::Fatal)];
        let counts = apply_tree(&tree, &one);
        let touched: Vec<_> = counts
            .values()
            .filter(|c| c.iter().sum::<u64>() > 0)
            .collect();
        assert_eq!(touched.len(), 1);
        assert_eq!(touched[0].iter().sum::<u64>(), 1);
    }

    #[test]
    fn tree_is_deterministic() {
        let persons = separable(60);
        let a = build_tree(&persons, &TreeParams::default()).unwrap();
        let b = build_tree(&persons, &TreeParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predicted_class_ties_break_towards_severity() {
        assert_eq!(predict(&[5, 5, 5]), InjurySeverity::Fatal);
        assert_eq!(predict(&[2, 5, 5]), InjurySeverity::Serious);
        assert_eq!(predict(&[0, 0, 1]), InjurySeverity::Slight);
    }

    #[test]
    fn factors_are_exact_ratios() {
        let mut indepth = BTreeMap::new();
        indepth.insert(2, [1u64, 4, 10]);
        indepth.insert(3, [2, 5, 20]);
        let mut target = BTreeMap::new();
        target.insert(2, [522u64, 10, 30]);
        target.insert(3, [4, 5, 40]);
        let factors = compute_factors(&indepth, &target).unwrap();
        // One in-depth fatality in node 2 corresponds to 522 in the target.
        assert_eq!(
            factors.get(2, InjurySeverity::Fatal).unwrap().value(),
            522.0
        );
        assert_eq!(
            factors.get(2, InjurySeverity::Serious).unwrap().value(),
            2.5
        );
        // Exactness: factor · in-depth frequency = target frequency in
        // integer arithmetic.
        for ((node, level), f) in factors.iter() {
            let i = indepth[&node][class_index(level)];
            let t = target[&node][class_index(level)];
            assert_eq!(f.indepth, i);
            assert_eq!(f.target, t);
        }
    }

    #[test]
    fn identical_datasets_give_unit_factors() {
        let mut counts = BTreeMap::new();
        counts.insert(2, [3u64, 7, 21]);
        counts.insert(3, [1, 2, 8]);
        let factors = compute_factors(&counts, &counts).unwrap();
        for (_, f) in factors.iter() {
            assert_eq!(f.value(), 1.0);
        }
    }

    #[test]
    fn zero_denominator_is_error() {
        let mut indepth = BTreeMap::new();
        indepth.insert(2, [0u64, 4, 10]);
        let mut target = BTreeMap::new();
        target.insert(2, [5u64, 4, 10]);
        assert!(matches!(
            compute_factors(&indepth, &target),
            Err(ExtrapolationError::ZeroDenominator {
                level: InjurySeverity::Fatal,
                node: 2
            })
        ));
    }

    #[test]
    fn extrapolation_identities() {
        let mut indepth = BTreeMap::new();
        indepth.insert(2, [2u64, 3, 5]);
        indepth.insert(3, [4, 6, 10]);
        let factors_unit = compute_factors(&indepth, &indepth).unwrap();
        let mut reductions = BTreeMap::new();
        reductions.insert(2, 1.5);
        reductions.insert(3, 2.5);
        let same =
            extrapolate_reduction(&reductions, &factors_unit, InjurySeverity::Fatal).unwrap();
        assert!((same - 4.0).abs() < 1e-12);

        // Single node, reduction 2, factor 160 → 320.
        let mut i2 = BTreeMap::new();
        i2.insert(2, [0u64, 1, 0]);
        let mut t2 = BTreeMap::new();
        t2.insert(2, [0u64, 160, 0]);
        let f2 = compute_factors(&i2, &t2).unwrap();
        let mut r2 = BTreeMap::new();
        r2.insert(2, 2.0);
        let v = extrapolate_reduction(&r2, &f2, InjurySeverity::Serious).unwrap();
        assert_eq!(v, 320.0);

        // Linearity: splitting a reduction across nodes with equal factors
        // leaves the total unchanged.
        let mut i3 = BTreeMap::new();
        i3.insert(2, [1u64, 0, 0]);
        i3.insert(3, [1u64, 0, 0]);
        let mut t3 = BTreeMap::new();
        t3.insert(2, [7u64, 0, 0]);
        t3.insert(3, [7u64, 0, 0]);
        let f3 = compute_factors(&i3, &t3).unwrap();
        let mut split_red = BTreeMap::new();
        split_red.insert(2, 0.75);
        split_red.insert(3, 1.25);
        let split_total = extrapolate_reduction(&split_red, &f3, InjurySeverity::Fatal).unwrap();
        let mut merged = BTreeMap::new();
        merged.insert(2, 2.0);
        let merged_total = extrapolate_reduction(&merged, &f3, InjurySeverity::Fatal).unwrap();
        assert!((split_total - merged_total).abs() < 1e-12);
    }

    #[test]
    fn missing_factor_for_nonzero_reduction_is_error() {
        let factors = ExtrapolationFactors::default();
        let mut reductions = BTreeMap::new();
        reductions.insert(4, 0.2);
        assert!(matches!(
            extrapolate_reduction(&reductions, &factors, InjurySeverity::Fatal),
            Err(ExtrapolationError::ZeroDenominator { node: 4, .. })
        ));
    }

    #[test]
    fn every_accepted_split_has_positive_gini_gain() {
        // Mixed, partially noisy data with several candidate variables.
        let mut persons = Vec::new();
        for i in 0..400 {
            let age = 15.0 + (i * 7 % 70) as f64;
            let urban = i % 3 != 0;
            let injury = match (age > 50.0, i % 5) {
                (true, 0) => InjurySeverity::Fatal,
                (true, _) => InjurySeverity::Serious,
                (false, 4) => InjurySeverity::Serious,
                _ => InjurySeverity::Slight,
            };
            persons.push(person(age, urban, injury));
        }
        let tree = build_tree(&persons, &TreeParams::default()).unwrap();
        tree.visit(&mut |node| {
            if let Some((l, r)) = &node.children {
                let n = node.class_counts.iter().sum::<u64>() as f64;
                let nl = l.class_counts.iter().sum::<u64>() as f64;
                let nr = r.class_counts.iter().sum::<u64>() as f64;
                let weighted = nl / n * gini(&l.class_counts) + nr / n * gini(&r.class_counts);
                assert!(
                    gini(&node.class_counts) - weighted > 0.0,
                    "node {} split has non-positive gain",
                    node.node_id
                );
            }
        });
    }

    #[test]
    fn render_tree_lists_every_node_once() {
        let persons = separable(40);
        let tree = build_tree(&persons, &TreeParams::default()).unwrap();
        let text = render_tree(&tree);
        let mut n_nodes = 0;
        tree.visit(&mut |_| n_nodes += 1);
        assert_eq!(text.lines().count(), n_nodes);
        assert!(text.contains("node 1: root"));
    }
}
